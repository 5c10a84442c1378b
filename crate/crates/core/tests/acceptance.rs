//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::process::{Command, Output};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::*;
use fullstab::cone::{ConeDesc, Polyhedron};
use fullstab::config::RunConfig;
use fullstab::harness::{certify, verify_inequality, Exponent};
use fullstab::model::parse_model;
use fullstab::monotone::{check_localization_estimate, estimate_moduli, GraphSample};
use fullstab::report::Status;
use fullstab::second_order::{check_smooth_psd, min_on_cone, QuadForm, Verdict};
use fullstab::solver::{build_localization, solve_faces, solve_projected, GridOptions, SearchBox, Step};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cli(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fullstab"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    cmd.output().expect("binary runs")
}

/// Extended real from a report field (`"+inf"` strings included).
fn ext(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(s) if s == "+inf" => f64::INFINITY,
        Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
        _ => f64::NAN,
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let out = cli(&["certify", &model_path("ex64.model"), "--seed", "7"], Some(1));
    let elapsed = start.elapsed();
    ensure(out.status.code() == Some(0), format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    let r: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(r["fully_stable"] == Value::Bool(true), format!("verdict {}", r["verdict"]))?;
    let cq = &r["cq"];
    ensure(cq["mfcq"]["verdict"] == "holds", "MFCQ does not hold")?;
    let d: Vec<f64> = cq["mfcq"]["witness"]["d"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    ensure(d == vec![0.0, 0.0, 1.0], format!("MFCQ witness {d:?}"))?;
    ensure(cq["licq"]["verdict"] == "fails", "LICQ should fail")?;
    ensure(cq["crcq"]["verdict"] == "holds", "CRCQ should hold")?;
    let mut vertices: Vec<Vec<String>> = serde_json::from_value(r["multipliers"]["vertices"].clone()).unwrap();
    vertices.sort();
    let expected = vec![vec!["0", "1/4", "3/8", "3/8"], vec!["3/8", "5/8", "0", "0"]];
    ensure(vertices == expected, format!("multiplier vertices {vertices:?}"))?;
    let g = &r["gssosc"];
    ensure(g["verdict"] == "fails", "GSSOSC should fail")?;
    let lam: Vec<f64> = serde_json::from_value(g["witness"]["lambda"].clone()).unwrap();
    ensure(lam == vec![0.375, 0.625, 0.0, 0.0], format!("GSSOSC failing multiplier {lam:?}"))?;
    let w: Vec<f64> = serde_json::from_value(g["witness"]["direction"].clone()).unwrap();
    let colinear = w[1].abs() / w.iter().map(|t| t * t).sum::<f64>().sqrt();
    ensure(colinear > 1.0 - 1e-9, format!("witness {w:?} not along e2"))?;
    let probe = r["scoc_probe"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["lambda"] == serde_json::json!(["3/8", "5/8", "0", "0"]))
        .ok_or("no SCOC probe at (3/8,5/8,0,0)")?;
    ensure(probe["basis"].as_array().unwrap().len() == 2, "SCOC probe should be 5x5")?;
    ensure(probe["determinant"] == "0" && ext(&probe["scaled_abs"]) < 1e-9, format!("SCOC det {}", probe["determinant"]))?;
    let gus = &r["gusosc"];
    ensure(gus["verdict"] == "corroborated" && ext(&gus["modulus"]) > 0.0, "GUSOSC not corroborated")?;
    ensure(r["config"]["eta"] == 0.01 && r["config"]["samples"] == 500, "GUSOSC not at eta = 1e-2, N = 500")?;
    let h = &r["harness"];
    ensure(h["entries"].as_u64().unwrap() >= 3125 && h["violation_count"] == 0, format!("harness {h}"))?;
    let kappa = ext(&r["moduli"]["kappa"]);
    ensure(kappa > 0.0, format!("kappa {kappa}"))?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "Λ = conv{{(3/8,5/8,0,0),(0,1/4,3/8,3/8)}}, SCOC det 0, GUSOSC ℓ̂ = {}, κ̂ = {}, ℓ̂ = {:.3}, {} nodes, {elapsed:.2?}",
        gus["modulus"], r["moduli"]["kappa"], ext(&r["moduli"]["ell"]), h["entries"]
    ))
}

fn criterion_2() -> Outcome {
    single_threaded(|| {
        let start = Instant::now();
        let m = parse_model(SKEW).map_err(|e| e.to_string())?;
        let psd = check_smooth_psd(&m, 1e-9).map_err(|e| e.to_string())?;
        ensure(psd.verdict == Verdict::Fails && (psd.modulus + 1.0).abs() <= 1e-12, format!("smooth modulus {}", psd.modulus))?;
        let zero = DVector::zeros(2);
        let sols = solve_faces(&m, &zero, &DVector::zeros(0), &SearchBox { center: zero.clone(), radius: 0.2 }).map_err(|e| e.to_string())?;
        ensure(sols.solutions.len() == 1, format!("{} solutions", sols.solutions.len()))?;
        let table = build_localization(
            &m,
            &GridOptions {
                rho_v: 0.05,
                rho_p: 0.05,
                grid_v: 5,
                grid_p: 5,
                random: 16,
                x_radius: 0.2,
                max_shrinks: 6,
                seed: 0,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut counts = Vec::new();
        for kappa in [0.01, 0.1, 1.0, 10.0] {
            let v = verify_inequality(&table, kappa, 0.0, Exponent::One, 1e-9, 200_000, 0);
            ensure(!v.is_empty(), format!("no violation at kappa {kappa}"))?;
            counts.push(v.len());
        }
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
        Ok(format!("modulus {}, unique face solution, violations per κ {counts:?}, {elapsed:.2?}", psd.modulus))
    })
}

/// Sampled minimum of `<Hw,w>` on `K ∩ sphere`, polished by projected
/// gradient descent from the best samples.
fn sampled_min(h: &DMatrix<f64>, k: &ConeDesc, rng: &mut ChaCha8Rng, draws: usize) -> Option<f64> {
    let n = h.nrows();
    let s = (h + h.transpose()) * 0.5;
    let q = |w: &DVector<f64>| w.dot(&(&s * w));
    let mut hits: Vec<(f64, DVector<f64>)> = Vec::new();
    for _ in 0..draws {
        let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let w = &w / w.norm();
        if k.contains_tol(&w, 0.0) {
            hits.push((q(&w), w));
        }
    }
    if hits.is_empty() {
        return None;
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cone = Polyhedron::new(n, k.ineq_rows().to_vec(), vec![0.0; k.ineq_rows().len()]);
    let step = 0.1 / s.norm().max(1e-12);
    let mut best = hits[0].0;
    for (_, w0) in hits.iter().take(10) {
        let mut w = w0.clone();
        for _ in 0..2000 {
            let z = &w - (&s * &w) * (2.0 * step);
            let y = cone.project(&z, Some(&w)).ok()?.point;
            if y.norm() < 1e-12 {
                break;
            }
            w = &y / y.norm();
        }
        if k.contains_tol(&w, 1e-12) {
            best = best.min(q(&w));
        }
    }
    Some(best)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut sign_errors, mut below, mut instances) = (0.0f64, 0, 0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let h = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let rows = rng.gen_range(1..=n + 1);
        // Rows are tilted away from a random axis `c` so that the cone has an
        // interior rejection sampling can reach.
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize();
        let ineq = (0..rows)
            .map(|_| {
                let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let tilt = g.dot(&c) + rng.gen_range(0.3..1.0);
                g - &c * tilt
            })
            .collect();
        let k = ConeDesc::new(n, Vec::new(), ineq);
        let (exact, _) = min_on_cone(&QuadForm::new(h.clone()), &k).map_err(|e| e.to_string())?;
        let Some(sampled) = sampled_min(&h, &k, &mut rng, 100_000) else {
            return Err(format!("no sampled direction fell in a cone with {rows} rows in R^{n}"));
        };
        instances += 1;
        worst = worst.max((exact - sampled).abs());
        if exact > sampled + 1e-9 {
            below += 1;
        }
        if sampled.abs() > 1e-3 && exact.abs() > 1e-3 && (exact > 0.0) != (sampled > 0.0) {
            sign_errors += 1;
        }
    }
    ensure(below == 0, format!("{below} instances where the sampled value beats the exact minimum"))?;
    ensure(sign_errors == 0, format!("{sign_errors} sign disagreements"))?;
    ensure(worst <= 1e-4, format!("max |exact - sampled| = {worst:e}"))?;
    Ok(format!("{instances} instances, max |exact - sampled| = {worst:.2e}, 0 sign disagreements"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let (mut worst, mut entries) = (0.0f64, 0usize);
    for k in 0..100 {
        let n = rng.gen_range(1..=3);
        let d = rng.gen_range(0..=2);
        let head = if k % 2 == 0 {
            let f: Vec<String> = (0..n).map(|_| random_expr(&mut rng, n, d, 3)).collect();
            format!("f = ({})", f.join(", "))
        } else {
            format!("potential = {}", random_expr(&mut rng, n, d, 3))
        };
        let text = format!("dims n={n} d={d}\n{head}\nconstraint {} <= 0\nconstraint {} <= 0\n", random_expr(&mut rng, n, d, 3), random_expr(&mut rng, n, d, 2));
        let m = parse_model(&text).map_err(|e| format!("{e}\n{text}"))?;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jac = m.eval_jac_f(&x, &p).map_err(|e| e.to_string())?;
        let grads = m.eval_grad_phi(&x, &p).map_err(|e| e.to_string())?;
        let bundle = m.bundle_at(&DVector::from_vec(x.clone()), &DVector::from_vec(p.clone())).map_err(|e| e.to_string())?;
        for j in 0..n {
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[j] += h;
            lo[j] -= h;
            let (fh, fl) = (m.eval_f(&hi, &p).unwrap(), m.eval_f(&lo, &p).unwrap());
            let (ph, pl) = (m.eval_phi(&hi, &p).unwrap(), m.eval_phi(&lo, &p).unwrap());
            let (gh, gl) = (m.eval_grad_phi(&hi, &p).unwrap(), m.eval_grad_phi(&lo, &p).unwrap());
            for i in 0..n {
                let e = rel(jac[i][j], (fh[i] - fl[i]) / (2.0 * h));
                worst = worst.max(e);
                entries += 1;
                ensure(e < 1e-6, format!("model {k}: d f{} / d x{} rel err {e:e}\n{text}", i + 1, j + 1))?;
            }
            for c in 0..m.m() {
                let e = rel(grads[c][j], (ph[c] - pl[c]) / (2.0 * h));
                worst = worst.max(e);
                ensure(e < 1e-6, format!("model {k}: gradient of constraint {} rel err {e:e}\n{text}", c + 1))?;
                let hess = bundle.constraint_hessian(c);
                for i in 0..n {
                    let e = rel(hess[(i, j)], (gh[c][i] - gl[c][i]) / (2.0 * h));
                    worst = worst.max(e);
                    entries += 2;
                    ensure(e < 1e-6, format!("model {k}: Hessian of constraint {} rel err {e:e}\n{text}", c + 1))?;
                }
            }
        }
    }
    Ok(format!("100 models, {entries} entries, max relative error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_gap, mut worst_vi) = (0.0f64, 0.0f64);
    let round = |v: f64| (v * 1e4).round() / 1e4;
    for k in 0..100 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=8);
        let b = DMatrix::from_fn(n, n, |_, _| round(rng.gen_range(-1.0..1.0)));
        let skew = DMatrix::from_fn(n, n, |_, _| round(rng.gen_range(-1.0..1.0)));
        let a = (&b * b.transpose()).map(round) + DMatrix::identity(n, n) * 0.5 + (&skew - skew.transpose());
        let c: Vec<f64> = (0..n).map(|_| round(rng.gen_range(-1.0..1.0))).collect();
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| round(rng.gen_range(-1.0..1.0))).collect()).collect();
        let rhs: Vec<f64> = (0..m).map(|_| round(rng.gen_range(0.2..1.0))).collect();
        let f: Vec<String> = (0..n).map(|i| affine(&a.row(i).iter().copied().collect::<Vec<_>>(), c[i])).collect();
        let mut text = format!("dims n={n} d=0\nf = ({})\n", f.join(", "));
        for (r, bi) in rows.iter().zip(&rhs) {
            text.push_str(&format!("constraint {} <= 0\n", affine(r, -bi)));
        }
        let model = parse_model(&text).map_err(|e| format!("{e}\n{text}"))?;
        let kappa = ((&a + a.transpose()) * 0.5).symmetric_eigenvalues().min();
        let lip = a.singular_values().max();
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let p = DVector::zeros(0);
        let it = solve_projected(&model, &v, &p, &DVector::zeros(n), Step::FromModuli { kappa, lipschitz: lip }, 2_000_000).map_err(|e| e.to_string())?;
        ensure(it.converged, format!("instance {k}: projected iteration did not converge"))?;
        let faces = solve_faces(&model, &v, &p, &SearchBox { center: DVector::zeros(n), radius: 1e3 }).map_err(|e| e.to_string())?;
        ensure(faces.solutions.len() == 1, format!("instance {k}: {} face solutions", faces.solutions.len()))?;
        let x = &faces.solutions[0].x;
        let gap = (&it.x - x).norm();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 1e-7, format!("instance {k}: solvers differ by {gap:e}"))?;
        // Variational inequality against feasible points.
        let poly = Polyhedron::new(n, rows.iter().map(|r| DVector::from_vec(r.clone())).collect(), rhs.clone());
        let fx = DVector::from_vec(model.eval_f(x.as_slice(), &[]).unwrap()) - &v;
        let mut tested = 0;
        while tested < 1000 {
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            if !poly.contains(&y, 0.0) {
                continue;
            }
            tested += 1;
            let ip = fx.dot(&(&y - x));
            worst_vi = worst_vi.min(ip);
            ensure(ip >= -1e-8, format!("instance {k}: <f(x) - v, y - x> = {ip:e}"))?;
        }
    }
    Ok(format!("100 instances, max solver gap {worst_gap:.2e}, min VI inner product {worst_vi:.2e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let (mut clean, mut flagged) = (0, 0);
    for k in 0..100 {
        let n = rng.gen_range(2..=5);
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        if k % 2 == 0 {
            let shift: f64 = ((&a + a.transpose()) * 0.5).symmetric_eigenvalues().min();
            a += DMatrix::identity(n, n) * (0.2 - shift.min(0.0));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        let mut points: Vec<DVector<f64>> = (0..40).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-0.1..0.1))).collect();
        points.push(DVector::zeros(n));
        for c in eig.eigenvectors.column_iter() {
            points.push(c.into_owned() * 0.05);
            points.push(c.into_owned() * -0.05);
        }
        let s = GraphSample::of_map(&points, |u| &a * u).map_err(|e| e.to_string())?;
        let est = estimate_moduli(&s).map_err(|e| e.to_string())?;
        worst = worst.max((est.kappa - lmin).abs());
        ensure((est.kappa - lmin).abs() <= 1e-9, format!("map {k}: kappa {} vs eigenvalue {lmin}", est.kappa))?;
        // Localization estimate (graph of the inverse) ⇒ modulus estimate.
        if lmin > 0.05 {
            for kappa in [0.5 * lmin, lmin, 1.5 * lmin, 3.0 * lmin] {
                if check_localization_estimate(&s, kappa, 1e-9).is_empty() {
                    clean += 1;
                    ensure(est.kappa >= kappa - 1e-9, format!("map {k}: no violations at {kappa} but kappa_hat {}", est.kappa))?;
                } else {
                    flagged += 1;
                }
            }
        }
    }
    Ok(format!("100 maps, max |kappa_hat - lambda_min| = {worst:.2e}; implication checked on {clean} clean samples ({flagged} flagged)"))
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig {
        samples: 200,
        ..RunConfig::default()
    };
    let mut lines = Vec::new();
    let mut breaks = Vec::new();
    let (mut gss, mut gus) = (0, 0);
    for (name, text) in corpus() {
        let m = parse_model(&text).map_err(|e| format!("{name}: {e}"))?;
        let r = certify(&m, &cfg, &text).map_err(|e| format!("{name}: {e}"))?;
        let g = r.gssosc.as_ref().map(|g| g.verdict.ok()).unwrap_or(false);
        let u = r.gusosc.as_ref().map(|g| g.verdict.ok()).unwrap_or(false);
        let h = r.harness.as_ref().map(|h| h.clean).unwrap_or(false);
        gss += g as usize;
        gus += u as usize;
        lines.push(format!("{name}: gssosc {g} gusosc {u} harness {h} status {:?}", r.status));
        if (g && !u) || (u && !h) || r.status == Status::Inconsistent || r.status.exit_code() == 2 {
            breaks.push(format!("{name} ({:?}: {})", r.status, r.verdict));
        }
    }
    ensure(breaks.is_empty(), format!("chain breaks: {}\n    {}", breaks.join("; "), lines.join("\n    ")))?;
    let unstable: Vec<&str> = lines.iter().filter(|l| l.contains("gusosc false")).map(|l| l.split(':').next().unwrap()).collect();
    Ok(format!("20 models, GSSOSC holds on {gss}, GUSOSC on {gus}, no breaks; not fully stable: {unstable:?}"))
}

fn criterion_8() -> Outcome {
    let mut sizes = Vec::new();
    for model in ["ex64.model", "skew.model"] {
        let path = model_path(model);
        let args = ["certify", path.as_str(), "--seed", "7"];
        let a = cli(&args, Some(1));
        let b = cli(&args, Some(1));
        let c = cli(&args, Some(4));
        ensure(!a.stdout.is_empty(), format!("{model}: empty report"))?;
        ensure(a.stdout == b.stdout, format!("{model}: reports differ between runs"))?;
        ensure(a.stdout == c.stdout, format!("{model}: reports differ between thread counts"))?;
        sizes.push(a.stdout.len());
    }
    Ok(format!("byte-identical reports across runs and thread counts ({sizes:?} bytes)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("example end-to-end", criterion_1),
        ("skew counterexample", criterion_2),
        ("cone minimum oracle", criterion_3),
        ("symbolic derivatives", criterion_4),
        ("solver cross-validation", criterion_5),
        ("monotonicity estimators", criterion_6),
        ("implication chain corpus", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({took:.1?}) — {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({took:.1?}) — {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
