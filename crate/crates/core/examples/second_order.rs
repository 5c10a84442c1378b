//! Second-order tests: GSSOSC over the multiplier polytope, sampled GUSOSC,
//! the bordered-determinant probe, and the smooth test on the skew map.

use fullstab::kkt::reference_multipliers;
use fullstab::model::parse_model;
use fullstab::second_order::{check_gssosc, check_gusosc, check_smooth_psd, scoc_probe_vertices, GusoscOptions, Verdict};

/// `(GSSOSC, GUSOSC, skew smooth test)` verdicts.
pub fn run() -> Result<(Verdict, Verdict, Verdict), Box<dyn std::error::Error>> {
    let m = parse_model(include_str!("ex64.model"))?;
    let set = reference_multipliers(&m, 1e-7)?;
    let gss = check_gssosc(&m, &set.to_f64(), 1e-9, 0)?;
    println!("GSSOSC {:?}, min {:.3e}, witness {:?}", gss.verdict, gss.modulus, gss.witness.as_ref().map(|w| &w.direction));
    let gus = check_gusosc(
        &m,
        &GusoscOptions {
            eta: 1e-2,
            samples: 200,
            seed: 7,
            tau_act: 1e-7,
            tau_pd: 1e-9,
        },
    )?;
    println!("GUSOSC {:?}, min {}, {:?}", gus.verdict, gus.modulus, gus.notes);
    for probe in scoc_probe_vertices(&m, &set)? {
        println!("SCOC det at J = {:?}: {}", probe.basis, probe.determinant);
    }
    let skew = parse_model(include_str!("skew.model"))?;
    let smooth = check_smooth_psd(&skew, 1e-9)?;
    println!("skew map: {:?} with modulus {}", smooth.verdict, smooth.modulus);
    Ok((gss.verdict, gus.verdict, smooth.verdict))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
