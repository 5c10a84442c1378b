//! Run configuration. The constants here are the single source of truth for
//! every CLI default.

use serde::Serialize;

use crate::cone::TAU_ACT;
use crate::kkt::{CRCQ_ETA, TAU_CQ};
use crate::second_order::TAU_PD;
use crate::solver::X_RADIUS;

pub const RHO_V: f64 = 0.05;
pub const RHO_P: f64 = 0.05;
/// GUSOSC graph samples.
pub const SAMPLES: usize = 500;
pub const CRCQ_SAMPLES: usize = 200;
pub const SEED: u64 = 0;
pub const GRID_V: usize = 5;
pub const GRID_P: usize = 5;
pub const RANDOM_NODES: usize = 16;
pub const MAX_SHRINKS: usize = 6;
pub const PAIR_CAP: usize = 200_000;
/// Tolerance on the pair inequalities (relative to `|v1 - v2|`).
pub const TOL_PAIR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub eta: f64,
    pub rho_v: f64,
    pub rho_p: f64,
    pub samples: usize,
    pub crcq_samples: usize,
    pub seed: u64,
    pub tol_pd: f64,
    pub tol_act: f64,
    pub tol_cq: f64,
    pub tol_pair: f64,
    pub grid_v: usize,
    pub grid_p: usize,
    pub random_nodes: usize,
    pub x_radius: f64,
    pub max_shrinks: usize,
    pub pair_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eta: CRCQ_ETA,
            rho_v: RHO_V,
            rho_p: RHO_P,
            samples: SAMPLES,
            crcq_samples: CRCQ_SAMPLES,
            seed: SEED,
            tol_pd: TAU_PD,
            tol_act: TAU_ACT,
            tol_cq: TAU_CQ,
            tol_pair: TOL_PAIR,
            grid_v: GRID_V,
            grid_p: GRID_P,
            random_nodes: RANDOM_NODES,
            x_radius: X_RADIUS,
            max_shrinks: MAX_SHRINKS,
            pair_cap: PAIR_CAP,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let positive = [
            ("eta", self.eta),
            ("rho-v", self.rho_v),
            ("rho-p", self.rho_p),
            ("tol-pd", self.tol_pd),
            ("tol-act", self.tol_act),
            ("tol-cq", self.tol_cq),
            ("tol-pair", self.tol_pair),
            ("x-radius", self.x_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::error::Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.grid_v == 0 || self.grid_p == 0 || self.pair_cap == 0 {
            return Err(crate::error::Error::InvalidArgument("grid sizes and pair cap must be positive".into()));
        }
        Ok(())
    }
}
