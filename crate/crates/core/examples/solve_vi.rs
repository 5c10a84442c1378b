//! Projected iteration against face enumeration on a box-constrained affine map.

use fullstab::model::parse_model;
use fullstab::solver::{solve_faces, solve_projected, SearchBox, Step};
use nalgebra::DVector;

const MODEL: &str = "\
dims n=2 d=1
f = (3*x1 + x2 - p1, -x1 + 2*x2)
constraint x1 - 1 <= 0
constraint -x1 - 1 <= 0
constraint x2 - 1 <= 0
constraint -x2 <= 0
";

/// Distance between the two solvers' answers.
pub fn run() -> Result<f64, Box<dyn std::error::Error>> {
    let m = parse_model(MODEL)?;
    let v = DVector::from_vec(vec![1.0, -0.5]);
    let p = DVector::from_vec(vec![0.2]);
    let projected = solve_projected(&m, &v, &p, &DVector::zeros(2), Step::Default, 100_000)?;
    let faces = solve_faces(&m, &v, &p, &SearchBox { center: DVector::zeros(2), radius: 2.0 })?;
    let x = &faces.solutions[0].x;
    println!("projected: {:?} after {} iterations", projected.x.as_slice(), projected.iterations);
    println!("faces:     {:?} with multipliers {:?}", x.as_slice(), faces.solutions[0].lambda);
    Ok((&projected.x - x).norm())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
