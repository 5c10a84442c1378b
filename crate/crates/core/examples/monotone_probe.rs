//! Strong-monotonicity modulus of a sampled linear map and of its inverse.

use fullstab::monotone::{estimate_from_inverse, estimate_moduli, GraphSample};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(sampled modulus, smallest eigenvalue of the symmetric part)`.
pub fn run() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<DVector<f64>> = (0..200).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let sample = GraphSample::of_map(&points, |u| &a * u)?;
    let est = estimate_moduli(&sample)?;
    let exact = ((&a + a.transpose()) * 0.5).symmetric_eigenvalues().min();
    println!("sampled kappa = {:.6}, symmetric-part eigenvalue = {exact:.6}: {}", est.kappa, est.verdict());
    let inv = estimate_from_inverse(&sample.inverse(), 1e-9)?;
    println!("inverse graph: Lipschitz {:.6}, kappa {:.6}", inv.lipschitz, inv.kappa);
    Ok((est.kappa, exact))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
