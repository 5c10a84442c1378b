//! Parse a model, evaluate `f`, its Jacobian and constraint Hessians, and
//! compare against central differences.

use fullstab::model::parse_model;

const MODEL: &str = "\
dims n=2 d=1
f = (x1^3 + p1*x2, x2/(1 + x1^2) - x1)
constraint x1^2 + x2^2 - 1 - p1 <= 0
";

/// Largest gap between symbolic and finite-difference Jacobian entries.
pub fn run() -> Result<f64, Box<dyn std::error::Error>> {
    let m = parse_model(MODEL)?;
    let (x, p) = ([0.3, -0.2], [0.1]);
    let jac = m.eval_jac_f(&x, &p)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let (mut hi, mut lo) = (x, x);
        hi[j] += h;
        lo[j] -= h;
        let (fh, fl) = (m.eval_f(&hi, &p)?, m.eval_f(&lo, &p)?);
        for i in 0..2 {
            worst = worst.max((jac[i][j] - (fh[i] - fl[i]) / (2.0 * h)).abs());
        }
    }
    let bundle = m.bundle_at(&x.to_vec().into(), &p.to_vec().into())?;
    println!("f = {:?}", m.eval_f(&x, &p)?);
    println!("grad_x f = {jac:?}");
    println!("hess phi_1 = {}", bundle.constraint_hessian(0));
    println!("max |symbolic - central difference| = {worst:.2e}");
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
