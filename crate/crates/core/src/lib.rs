pub mod cone;
pub mod config;
pub mod error;
pub mod expr;
pub mod harness;
pub mod kkt;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod monotone;
pub mod report;
pub mod scalar;
pub mod second_order;
pub mod serfmt;
pub mod solver;
