//! Localization table around the reference point, moduli fit and pair
//! verification.

use fullstab::harness::{fit_moduli, verify_inequality, StabilityModuli};
use fullstab::model::parse_model;
use fullstab::solver::{build_localization, GridOptions};

/// Fitted moduli and violation count for a model file.
pub fn run(text: &str) -> Result<(StabilityModuli, usize), Box<dyn std::error::Error>> {
    let m = parse_model(text)?;
    let grid = GridOptions {
        rho_v: 0.05,
        rho_p: 0.05,
        grid_v: 5,
        grid_p: 5,
        random: 16,
        x_radius: 0.2,
        max_shrinks: 6,
        seed: 0,
    };
    let table = build_localization(&m, &grid)?;
    let fit = fit_moduli(&table, 1e-9, 1e-9, 200_000, 0)?;
    let bad = verify_inequality(&table, fit.kappa_used, fit.ell, fit.exponent, 1e-9, 200_000, 0);
    println!("{} nodes; kappa = {}, ell = {:.4}, exponent {:?}; {} violations", table.entries.len(), fit.kappa, fit.ell, fit.exponent, bad.len());
    Ok((fit, bad.len()))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run(include_str!("ex64.model"))?;
    run(include_str!("skew.model"))?;
    Ok(())
}
