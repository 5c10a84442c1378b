//! End-to-end certification of a model file.
//!
//! `cargo run --example certify_model -- crates/core/examples/ex64.model`

use fullstab::config::RunConfig;
use fullstab::harness::certify;
use fullstab::model::parse_model;
use fullstab::report::StabilityReport;

pub fn run(path: &str) -> Result<StabilityReport, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let model = parse_model(&text)?;
    Ok(certify(&model, &RunConfig::default(), &text)?)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ex64.model").into());
    print!("{}", run(&path)?.to_text());
    Ok(())
}
