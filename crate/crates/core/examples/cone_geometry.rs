//! Tangent cone, critical cone and its polar at the pyramid apex, by double
//! description.

use fullstab::cone::{active_set, critical_cone, polar_cone, span_difference, tangent_cone};
use fullstab::model::parse_model;

/// Returns `(tangent rays, critical cone is {0}, dim span(K - K))`.
pub fn run() -> Result<(usize, bool, usize), Box<dyn std::error::Error>> {
    let m = parse_model(include_str!("ex64.model"))?;
    let r = m.require_reference()?;
    let (x, p) = (r.x_f64(), r.p_f64());
    let active = active_set(&m, x.as_slice(), p.as_slice(), 1e-7)?;
    let t = tangent_cone(&m, &x, &p, &active)?;
    let k = critical_cone(&t, &r.v_hat_f64())?;
    let gens = t.generators();
    println!("tangent cone: {} rays, {} lines", gens.rays.len(), gens.lineality.len());
    gens.write_csv(m.n(), std::io::stdout())?;
    println!("critical cone is the origin: {}", k.is_origin());
    let polar = polar_cone(&k).generators();
    println!("polar of critical cone: {} lines", polar.lineality.len());
    Ok((gens.rays.len(), k.is_origin(), span_difference(&k).dim()))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
