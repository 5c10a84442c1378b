//! Constraint qualifications and the exact multiplier polytope.

use fullstab::kkt::{check_licq, check_mfcq, probe_crcq, reference_multipliers};
use fullstab::model::parse_model;
use fullstab::scalar::rational_to_string;

/// Exact multiplier vertices as fraction strings.
pub fn run() -> Result<Vec<Vec<String>>, Box<dyn std::error::Error>> {
    let m = parse_model(include_str!("ex64.model"))?;
    let r = m.require_reference()?;
    let (x, p) = (r.x_f64(), r.p_f64());
    let mfcq = check_mfcq(&m, &r.x, &r.p, 1e-7)?;
    let licq = check_licq(&m, &x, &p, 1e-7)?;
    let crcq = probe_crcq(&m, &x, &p, 1e-2, 200, 0, 1e-7)?;
    println!("MFCQ {:?}: {:?}", mfcq.verdict, mfcq.witness);
    println!("LICQ {:?}: {:?}", licq.verdict, licq.witness);
    println!("CRCQ {:?}", crcq.verdict);
    let set = reference_multipliers(&m, 1e-7)?;
    let vertices: Vec<Vec<String>> = set.vertices.iter().map(|v| v.iter().map(rational_to_string).collect()).collect();
    println!("multiplier polytope (dim {}): {vertices:?}", set.dimension);
    Ok(vertices)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
