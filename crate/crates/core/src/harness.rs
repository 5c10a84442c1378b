//! Empirical check of the full-stability pair inequality over a
//! localization table, moduli fitting, and the end-to-end certification
//! pipeline.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kkt::{check_licq, check_mfcq, probe_crcq, reference_multipliers, strict_complement};
use crate::model::ParametricModel;
use crate::report::{CqSection, Harness, MultiplierSection, StabilityReport, Status};
use crate::scalar::rational_to_string;
use crate::second_order::{check_gssosc, check_gusosc, check_pvi_pointwise, check_smooth_psd, scoc_probe_vertices, GusoscOptions, Verdict};
use crate::serfmt;
use crate::solver::{build_localization, GridOptions, LocalizationTable, TableEntry};

const FLAT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Exponent {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "1")]
    One,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Half => 0.5,
            Exponent::One => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityViolation {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub dv: f64,
    pub dp: f64,
}

/// Unordered index pairs: all of them up to `cap`, else `cap` seeded draws.
pub fn pair_list(len: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = len * len.saturating_sub(1) / 2;
    if total <= cap {
        return (0..len).flat_map(|i| (i + 1..len).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(usize, usize)> = (0..cap)
        .map(|_| loop {
            let i = rng.gen_range(0..len);
            let j = rng.gen_range(0..len);
            if i != j {
                break (i.min(j), i.max(j));
            }
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// `(|(v1-v2) - 2κ(θ1-θ2)|, |v1-v2|, d(p1,p2))`.
fn pair_terms(t: &LocalizationTable, i: usize, j: usize, kappa: f64) -> (f64, f64, f64) {
    let (a, b) = (&t.entries[i], &t.entries[j]);
    let dv = &a.v - &b.v;
    let lhs = (&dv - (&a.x - &b.x) * (2.0 * kappa)).norm();
    (lhs, dv.norm(), (&a.p - &b.p).norm())
}

/// Pairs of the table violating the full-stability inequality at `(κ, ℓ, e)`.
pub fn verify_inequality(t: &LocalizationTable, kappa: f64, ell: f64, exponent: Exponent, tol: f64, cap: usize, seed: u64) -> Vec<InequalityViolation> {
    let pairs = pair_list(t.entries.len(), cap, seed);
    pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let (lhs, dv, dp) = pair_terms(t, i, j, kappa);
            let rhs = dv + ell * dp.powf(exponent.value());
            (lhs > rhs + tol * (1.0 + dv)).then_some(InequalityViolation {
                i,
                j,
                lhs,
                rhs,
                margin: lhs - rhs,
                dv,
                dp,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityModuli {
    /// Minimum over p-frozen pairs; `+inf` when no such pair moves `θ`.
    #[serde(serialize_with = "serfmt::ext")]
    pub kappa: f64,
    pub kappa_flag: Option<String>,
    /// Modulus used for `ℓ` fitting and verification.
    pub kappa_used: f64,
    pub ell: f64,
    /// Log-log slope of `|θ(v̄,p1)-θ(v̄,p2)|` against `d(p1,p2)`.
    pub gamma_hat: Option<f64>,
    pub parameter_independent: bool,
    pub exponent: Exponent,
    pub p_frozen_pairs: usize,
    pub v_frozen_pairs: usize,
    pub pairs_checked: usize,
    pub kappa_witness: Option<(usize, usize)>,
    pub ell_witness: Option<(usize, usize)>,
}

fn key(v: &nalgebra::DVector<f64>) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Index groups sharing the same value of a column.
fn groups<F: Fn(usize) -> Vec<u64>>(len: usize, key_of: F) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for i in 0..len {
        map.entry(key_of(i)).or_default().push(i);
    }
    map.into_values().filter(|g| g.len() > 1).collect()
}

/// Least-squares slope of `y` against `x`.
fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return None;
    }
    Some(points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Fits `κ`, the parameter exponent and the smallest clean `ℓ`.
pub fn fit_moduli(t: &LocalizationTable, tau: f64, tol: f64, cap: usize, seed: u64) -> Result<StabilityModuli> {
    let len = t.entries.len();
    if len < 2 {
        return Err(Error::NoSamples("localization table has fewer than two entries".into()));
    }
    // κ over p-frozen pairs.
    let p_groups = groups(len, |i| key(&t.entries[i].p));
    let mut p_pairs: Vec<(usize, usize)> = p_groups
        .iter()
        .flat_map(|g| g.iter().enumerate().flat_map(move |(a, &i)| g[a + 1..].iter().map(move |&j| (i, j))))
        .collect();
    if p_pairs.len() > cap {
        let picks = pair_list(p_pairs.len(), cap, seed ^ 0x5eed);
        let mut chosen: Vec<usize> = picks.into_iter().map(|(i, _)| i).collect();
        chosen.sort_unstable();
        chosen.dedup();
        p_pairs = chosen.into_iter().map(|k| p_pairs[k]).collect();
    }
    if p_pairs.is_empty() {
        return Err(Error::NoSamples("no pairs with a common parameter value".into()));
    }
    let mut kappa = f64::INFINITY;
    let mut kappa_witness = None;
    for &(i, j) in &p_pairs {
        let (a, b) = (&t.entries[i], &t.entries[j]);
        let dt = &a.x - &b.x;
        let n2 = dt.norm_squared();
        if n2.sqrt() <= FLAT {
            continue;
        }
        let r = (&a.v - &b.v).dot(&dt) / n2;
        if r < kappa {
            kappa = r;
            kappa_witness = Some((i, j));
        }
    }
    let (kappa_used, kappa_flag) = if kappa == f64::INFINITY {
        (1.0, Some("unbounded: the localization does not move along any p-frozen pair; kappa = 1 used for fitting".to_string()))
    } else if kappa <= tau {
        (1.0, Some(format!("nonpositive: kappa_hat = {kappa:e}; kappa = 1 used to exhibit violations")))
    } else {
        (kappa, None)
    };

    // Exponent over pairs sharing the reference v (the centre grid column).
    let v_groups = groups(len, |i| key(&t.entries[i].v));
    // The grid is centred on v̄: take the v column nearest the grid mean.
    let grid: Vec<&TableEntry> = t.entries.iter().filter(|e| e.grid).collect();
    let centre = if grid.is_empty() {
        Vec::new()
    } else {
        let mean = grid.iter().fold(DVector::zeros(t.n), |acc, e| acc + &e.v) / grid.len() as f64;
        v_groups
            .iter()
            .min_by(|a, b| (&t.entries[a[0]].v - &mean).norm().total_cmp(&(&t.entries[b[0]].v - &mean).norm()))
            .cloned()
            .unwrap_or_default()
    };
    // Slope is taken against the (v̄, p̄) node: the local exponent at the
    // reference, rather than a fit mixing pairs far from p̄.
    let anchor = match (centre.is_empty(), grid.is_empty()) {
        (false, false) => {
            let pbar = grid.iter().fold(DVector::zeros(t.d), |acc, e| acc + &e.p) / grid.len() as f64;
            centre.iter().copied().min_by(|&a, &b| (&t.entries[a].p - &pbar).norm().total_cmp(&(&t.entries[b].p - &pbar).norm()))
        }
        _ => None,
    };
    let mut v_pairs = 0;
    let mut logs = Vec::new();
    let mut moving = false;
    for (a, &i) in centre.iter().enumerate() {
        for &j in &centre[a + 1..] {
            v_pairs += 1;
            let dp = (&t.entries[i].p - &t.entries[j].p).norm();
            let dt = (&t.entries[i].x - &t.entries[j].x).norm();
            if dt > FLAT {
                moving = true;
            }
            if dp > FLAT && dt > FLAT && (anchor == Some(i) || anchor == Some(j)) {
                logs.push((dp.ln(), dt.ln()));
            }
        }
    }
    let gamma_hat = if moving { slope(&logs) } else { None };
    let parameter_independent = !moving;
    let exponent = match gamma_hat {
        Some(g) if g < 0.75 => Exponent::Half,
        _ => Exponent::One,
    };

    // Smallest ℓ clearing every sampled pair with d(p1,p2) > 0.
    let pairs = pair_list(len, cap, seed);
    let (ell, ell_witness) = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let (lhs, dv, dp) = pair_terms(t, i, j, kappa_used);
            if dp <= FLAT {
                return None;
            }
            let need = (lhs - dv - tol * (1.0 + dv)) / dp.powf(exponent.value());
            Some((need.max(0.0), (i, j)))
        })
        .reduce(|| (0.0, (usize::MAX, usize::MAX)), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok(StabilityModuli {
        kappa,
        kappa_flag,
        kappa_used,
        ell,
        gamma_hat,
        parameter_independent,
        exponent,
        p_frozen_pairs: p_pairs.len(),
        v_frozen_pairs: v_pairs,
        pairs_checked: pairs.len(),
        kappa_witness,
        ell_witness: (ell > 0.0).then_some(ell_witness),
    })
}

/// Violations kept in reports.
pub const REPORTED_VIOLATIONS: usize = 20;

/// The certification pipeline: CQs, multipliers, second-order conditions,
/// localization table and pair verification.
pub fn certify(model: &ParametricModel, cfg: &RunConfig, model_text: &str) -> Result<StabilityReport> {
    certify_with_table(model, cfg, model_text).map(|(r, _)| r)
}

/// As [`certify`], also returning the localization table when one was built.
pub fn certify_with_table(model: &ParametricModel, cfg: &RunConfig, model_text: &str) -> Result<(StabilityReport, Option<LocalizationTable>)> {
    cfg.validate()?;
    let r = model.require_reference()?;
    let (x, p) = (r.x_f64(), r.p_f64());
    let mut report = StabilityReport::new(model_text);
    report.config = cfg.clone();

    let mfcq = check_mfcq(model, &r.x, &r.p, cfg.tol_act)?;
    let licq = check_licq(model, &x, &p, cfg.tol_act)?;
    let crcq = probe_crcq(model, &x, &p, cfg.eta, cfg.crcq_samples, cfg.seed, cfg.tol_act)?;
    let mfcq_ok = mfcq.verdict.ok();
    let crcq_ok = crcq.verdict.ok();
    report.cq = Some(CqSection { mfcq, licq, crcq });
    if !model.all_affine_in_x() {
        report.notes.push("tangent cone: linearization cone, exact under MFCQ".into());
    }
    report.notes.push("Legendre form: automatic in finite dimensions".into());
    if !mfcq_ok {
        match reference_multipliers(model, cfg.tol_act) {
            Err(e) => report.notes.push(format!("multipliers: {e}")),
            Ok(_) => report.notes.push("multiplier set bounded despite MFCQ failure".into()),
        }
        report.set_status(Status::NotCertifiable, "not certifiable: MFCQ fails at the reference point");
        return Ok((report, None));
    }

    let exact = reference_multipliers(model, cfg.tol_act)?;
    let set = exact.to_f64();
    report.multipliers = Some(MultiplierSection {
        active: set.active.iter().map(|i| i + 1).collect(),
        vertices: exact.vertices.iter().map(|v| v.iter().map(rational_to_string).collect()).collect(),
        dimension: set.dimension,
        strict_complements: set
            .vertices
            .iter()
            .map(|l| strict_complement(l, &set.active, cfg.tol_cq).iter().map(|i| i + 1).collect())
            .collect(),
    });

    let gssosc = check_gssosc(model, &set, cfg.tol_pd, cfg.seed)?;
    let gusosc = check_gusosc(
        model,
        &GusoscOptions {
            eta: cfg.eta,
            samples: cfg.samples,
            seed: cfg.seed,
            tau_act: cfg.tol_act,
            tau_pd: cfg.tol_pd,
        },
    )?;
    if model.parameter_free_polyhedron() {
        report.pvi_pointwise = Some(check_pvi_pointwise(model, cfg.tol_act, cfg.tol_pd)?);
    }
    if model.m() == 0 {
        report.smooth_psd = Some(check_smooth_psd(model, cfg.tol_pd)?);
    }
    report.scoc_probe = scoc_probe_vertices(model, &exact)?;
    let gssosc_ok = gssosc.verdict.ok();
    let gusosc_ok = gusosc.verdict.ok();
    report.gssosc = Some(gssosc);
    report.gusosc = Some(gusosc);

    // Empirical corroboration.
    let grid = GridOptions {
        rho_v: cfg.rho_v,
        rho_p: cfg.rho_p,
        grid_v: cfg.grid_v,
        grid_p: cfg.grid_p,
        random: cfg.random_nodes,
        x_radius: cfg.x_radius,
        max_shrinks: cfg.max_shrinks,
        seed: cfg.seed,
    };
    let mut kept = None;
    let harness_ok = match build_localization(model, &grid) {
        Err(Error::NotSingleValued(why)) => {
            report.harness = Some(Harness::failed(why));
            false
        }
        Err(e) => return Err(e),
        Ok(table) => {
            let moduli = fit_moduli(&table, cfg.tol_pd, cfg.tol_pair, cfg.pair_cap, cfg.seed)?;
            let mut violations = verify_inequality(&table, moduli.kappa_used, moduli.ell, moduli.exponent, cfg.tol_pair, cfg.pair_cap, cfg.seed);
            let clean = moduli.kappa > cfg.tol_pd && violations.is_empty();
            let total = violations.len();
            violations.sort_by(|a, b| b.margin.total_cmp(&a.margin).then((a.i, a.j).cmp(&(b.i, b.j))));
            violations.truncate(REPORTED_VIOLATIONS);
            report.harness = Some(Harness::from_table(&table, clean, total));
            report.moduli = Some(moduli);
            report.violations = violations;
            kept = Some(table);
            clean
        }
    };

    if gssosc_ok && !gusosc_ok {
        report.set_status(Status::Inconsistent, "inconsistent — investigate: GSSOSC holds but sampled GUSOSC fails");
        return Ok((report, kept));
    }
    if !crcq_ok {
        let stable = gssosc_ok && harness_ok;
        report.notes.push("CRCQ fails: the characterization does not apply; result rests on the harness".into());
        report.set_status(Status::Undetermined, "undetermined: CRCQ fails");
        report.fully_stable = stable;
        return Ok((report, kept));
    }
    match (gusosc_ok, harness_ok) {
        (true, true) => report.set_status(Status::FullyStable, "fully stable (GUSOSC under MFCQ and CRCQ; harness corroborates)"),
        (false, false) => report.set_status(Status::NotFullyStable, "not fully stable (GUSOSC fails under MFCQ and CRCQ; harness corroborates)"),
        (true, false) => report.set_status(Status::Inconsistent, "inconsistent — investigate: GUSOSC holds but the harness finds violations"),
        (false, true) => report.set_status(Status::Inconsistent, "inconsistent — investigate: GUSOSC fails but the harness is clean"),
    }
    if report.status == Status::Inconsistent {
        // The condition-driven answer stays the headline value.
        report.fully_stable = gusosc_ok;
    }
    if let Some(g) = &report.gssosc {
        if g.verdict == Verdict::Fails && gusosc_ok {
            report.notes.push("GSSOSC fails while GUSOSC holds: consistent, GSSOSC is only sufficient".into());
        }
    }
    if report.scoc_probe.iter().any(|s| s.violation) {
        report.notes.push("SCOC probe: a bordered determinant vanishes".into());
    }
    Ok((report, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn table(entries: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>) -> LocalizationTable {
        let n = entries[0].0.len();
        let d = entries[0].1.len();
        LocalizationTable {
            n,
            d,
            rho_v: 0.05,
            rho_p: 0.05,
            x_radius: 0.2,
            shrinks: 0,
            singular_faces: 0,
            entries: entries
                .into_iter()
                .map(|(v, p, x)| TableEntry {
                    v: DVector::from_vec(v),
                    p: DVector::from_vec(p),
                    x: DVector::from_vec(x),
                    residual: 0.0,
                    method: crate::solver::Method::FaceEnumeration,
                    grid: true,
                })
                .collect(),
        }
    }

    fn grid_table(c: f64) -> LocalizationTable {
        let mut e = Vec::new();
        for i in 0..5 {
            for k in 0..3 {
                let v = vec![-0.05 + 0.025 * i as f64];
                let p = vec![-0.05 + 0.05 * k as f64];
                e.push((v.clone(), p, vec![v[0] / (2.0 * c)]));
            }
        }
        table(e)
    }

    #[test]
    fn scaled_identity_has_no_violations() {
        let t = grid_table(3.0);
        assert!(verify_inequality(&t, 3.0, 0.0, Exponent::One, 1e-12, 1000, 0).is_empty());
    }

    #[test]
    fn skew_violates_for_every_kappa() {
        let mut e = Vec::new();
        for a in [-0.05, 0.0, 0.05] {
            for b in [-0.05, 0.0, 0.05] {
                e.push((vec![a, b], vec![], vec![a, -b]));
            }
        }
        let t = table(e);
        for kappa in [0.01, 0.1, 1.0, 10.0] {
            let v = verify_inequality(&t, kappa, 0.0, Exponent::One, 1e-12, 1000, 0);
            assert!(!v.is_empty());
            assert!(v.iter().any(|x| (&t.entries[x.i].v - &t.entries[x.j].v)[0] == 0.0));
        }
    }

    #[test]
    fn fit_on_scaled_identity() {
        // θ = v/4: the strong-monotonicity ratio is 4 on every pair.
        let t = grid_table(2.0);
        let m = fit_moduli(&t, 1e-9, 1e-9, 10_000, 0).unwrap();
        assert!((m.kappa - 4.0).abs() < 1e-12, "kappa {}", m.kappa);
        assert_eq!(m.ell, 0.0);
        assert!(m.parameter_independent);
        assert!(m.gamma_hat.is_none());
    }

    #[test]
    fn fit_detects_lipschitz_parameter_dependence() {
        let mut e = Vec::new();
        for i in 0..5 {
            for k in 0..5 {
                let v = -0.05 + 0.025 * i as f64;
                let p = -0.05 + 0.025 * k as f64;
                e.push((vec![v], vec![p], vec![v + 3.0 * p]));
            }
        }
        let t = table(e);
        let m = fit_moduli(&t, 1e-9, 1e-9, 10_000, 0).unwrap();
        assert!((m.gamma_hat.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(m.exponent, Exponent::One);
        assert!(verify_inequality(&t, m.kappa_used, m.ell, m.exponent, 1e-9, 10_000, 0).is_empty());
        assert!(m.ell > 0.0);
    }

    #[test]
    fn fit_detects_square_root_parameter_dependence() {
        // θ(v, p) = v + sgn(p)|p|^(1/2): Hölder, not Lipschitz, in p.
        let mut e = Vec::new();
        for i in 0..5 {
            for k in 0..5 {
                let v = -0.05 + 0.025 * i as f64;
                let p: f64 = -0.05 + 0.025 * k as f64;
                e.push((vec![v], vec![p], vec![v + p.signum() * p.abs().sqrt()]));
            }
        }
        let t = table(e);
        let m = fit_moduli(&t, 1e-9, 1e-9, 10_000, 0).unwrap();
        let g = m.gamma_hat.unwrap();
        assert!((g - 0.5).abs() < 0.15, "gamma {g}");
        assert_eq!(m.exponent, Exponent::Half);
        assert!(verify_inequality(&t, m.kappa_used, m.ell, Exponent::Half, 1e-9, 10_000, 0).is_empty());
    }

    #[test]
    fn exponent_one_clean_implies_half_clean_on_small_grids() {
        let mut e = Vec::new();
        for i in 0..4 {
            for k in 0..4 {
                let v = -0.05 + 0.03 * i as f64;
                let p = -0.05 + 0.03 * k as f64;
                e.push((vec![v], vec![p], vec![v / 2.0 + p]));
            }
        }
        let t = table(e);
        let m = fit_moduli(&t, 1e-9, 1e-9, 10_000, 0).unwrap();
        assert!(verify_inequality(&t, m.kappa_used, m.ell, Exponent::One, 1e-9, 10_000, 0).is_empty());
        assert!(verify_inequality(&t, m.kappa_used, m.ell, Exponent::Half, 1e-9, 10_000, 0).is_empty());
    }

    #[test]
    fn pair_list_is_deterministic_and_capped() {
        assert_eq!(pair_list(4, 100, 0).len(), 6);
        let a = pair_list(1000, 500, 7);
        assert_eq!(a, pair_list(1000, 500, 7));
        assert!(a.len() <= 500 && a.iter().all(|&(i, j)| i < j));
    }

    #[test]
    fn certify_identity() {
        let m = parse_model("dims n=2 d=0\nf = (x1, x2)\nreference x=(0,0) v=(0,0)\n").unwrap();
        let cfg = RunConfig {
            samples: 50,
            ..RunConfig::default()
        };
        let rep = certify(&m, &cfg, "identity").unwrap();
        assert_eq!(rep.status, Status::FullyStable);
        assert!(rep.fully_stable);
        assert!((rep.moduli.unwrap().kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certify_skew() {
        let m = parse_model("dims n=2 d=0\nf = (x1, -x2)\nreference x=(0,0) v=(0,0)\n").unwrap();
        let cfg = RunConfig {
            samples: 50,
            ..RunConfig::default()
        };
        let rep = certify(&m, &cfg, "skew").unwrap();
        assert_eq!(rep.status, Status::NotFullyStable);
        assert!(!rep.fully_stable);
        assert!(!rep.violations.is_empty());
        assert_eq!(rep.smooth_psd.unwrap().verdict, Verdict::Fails);
    }

    #[test]
    fn certify_degenerate_is_not_certifiable() {
        let m = parse_model("dims n=1 d=0\nf = (x1)\nconstraint x1 <= 0\nconstraint -x1 <= 0\nreference x=(0) v=(0)\n").unwrap();
        let rep = certify(&m, &RunConfig::default(), "degenerate").unwrap();
        assert_eq!(rep.status, Status::NotCertifiable);
    }
}
