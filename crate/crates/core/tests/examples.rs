//! Every cargo example runs and reports what it claims.

mod common;

#[path = "../examples/certify_model.rs"]
mod certify_model;
#[path = "../examples/cone_geometry.rs"]
mod cone_geometry;
#[path = "../examples/localization_harness.rs"]
mod localization_harness;
#[path = "../examples/model_derivatives.rs"]
mod model_derivatives;
#[path = "../examples/monotone_probe.rs"]
mod monotone_probe;
#[path = "../examples/multipliers.rs"]
mod multipliers;
#[path = "../examples/second_order.rs"]
mod second_order;
#[path = "../examples/solve_vi.rs"]
mod solve_vi;

use fullstab::report::Status;
use fullstab::second_order::Verdict;

#[test]
fn certify_model_example() {
    let r = certify_model::run(&common::model_path("ex64.model")).unwrap();
    assert_eq!(r.status, Status::FullyStable);
    let r = certify_model::run(&common::model_path("skew.model")).unwrap();
    assert_eq!(r.status, Status::NotFullyStable);
    let r = certify_model::run(&common::model_path("identity.model")).unwrap();
    assert_eq!(r.status, Status::FullyStable);
    let r = certify_model::run(&common::model_path("degenerate.model")).unwrap();
    assert_eq!(r.status, Status::NotCertifiable);
}

#[test]
fn cone_geometry_example() {
    assert_eq!(cone_geometry::run().unwrap(), (4, true, 0));
}

#[test]
fn localization_harness_example() {
    let (fit, bad) = localization_harness::run(common::EX64).unwrap();
    assert_eq!(bad, 0);
    assert!((fit.gamma_hat.unwrap() - 1.0).abs() <= 0.1);
    let (_, bad) = localization_harness::run(common::SKEW).unwrap();
    assert!(bad > 0);
}

#[test]
fn model_derivatives_example() {
    assert!(model_derivatives::run().unwrap() < 1e-8);
}

#[test]
fn monotone_probe_example() {
    let (sampled, exact) = monotone_probe::run().unwrap();
    assert!(sampled >= exact - 1e-12);
    assert!(sampled - exact < 0.05);
}

#[test]
fn multipliers_example() {
    let v = multipliers::run().unwrap();
    assert!(v.contains(&vec!["3/8".into(), "5/8".into(), "0".into(), "0".into()]));
    assert!(v.contains(&vec!["0".into(), "1/4".into(), "3/8".into(), "3/8".into()]));
}

#[test]
fn second_order_example() {
    assert_eq!(second_order::run().unwrap(), (Verdict::Fails, Verdict::Corroborated, Verdict::Fails));
}

#[test]
fn solve_vi_example() {
    assert!(solve_vi::run().unwrap() < 1e-8);
}
