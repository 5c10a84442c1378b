//! Second-order tests: quadratic forms on subspaces and polyhedral cones,
//! GSSOSC, sampled GUSOSC, pointwise tests for fixed polyhedra, the smooth
//! positive-definiteness test and the bordered-determinant SCOC probe.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone::{critical_cone, span_difference, tangent_cone, ConeDesc, SubspaceBasis, MAX_DIM};
use crate::error::{Error, Result};
use crate::kkt::{multiplier_polytope, reference_multipliers, sample_ball, strict_complement, MultiplierSet, TAU_CQ};
use crate::linalg::{determinant, rank, sorted_eigen, subsets, symmetric_part, Rows};
use crate::model::{ParametricModel, FEASIBILITY_TOL};
use crate::scalar::{rational_to_string, Rational, Scalar};
use crate::serfmt;

/// Positivity threshold for strict inequalities.
pub const TAU_PD: f64 = 1e-9;
/// Inequality rows accepted by face enumeration.
pub const MAX_CONE_ROWS: usize = 12;
/// Extra random multipliers scanned by GSSOSC.
pub const GSSOSC_RANDOM: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm {
    h: DMatrix<f64>,
    hs: DMatrix<f64>,
}

impl QuadForm {
    pub fn new(h: DMatrix<f64>) -> Self {
        assert_eq!(h.nrows(), h.ncols(), "quadratic form must be square");
        let hs = symmetric_part(&h);
        QuadForm { h, hs }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn sym(&self) -> &DMatrix<f64> {
        &self.hs
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.hs * w))
    }

    pub fn scaled(&self, c: f64) -> Self {
        QuadForm::new(&self.h * c)
    }
}

/// Minimum of `<Hw,w>` over unit `w` in `span(V)`, with argmin;
/// `+inf` on the zero subspace.
pub fn min_on_subspace(q: &QuadForm, v: &SubspaceBasis) -> (f64, Option<DVector<f64>>) {
    if v.dim() == 0 {
        return (f64::INFINITY, None);
    }
    let m = v.matrix();
    let reduced = m.transpose() * q.sym() * m;
    let (lam, y) = sorted_eigen(&reduced).into_iter().next().expect("nonempty subspace");
    let w = m * y;
    let norm = w.norm();
    (lam, Some(w / norm))
}

/// Exact minimum of `<Hw,w>` over `K ∩ sphere` by face enumeration: on each
/// face span the minimiser is an eigenvector of the compressed form, so every
/// eigenspace is intersected with `K` and the smallest feasible one wins.
pub fn min_on_cone(q: &QuadForm, k: &ConeDesc) -> Result<(f64, Option<DVector<f64>>)> {
    let n = q.dim();
    if k.dim() != n {
        return Err(Error::Dimension(format!("form is {n}-dimensional but cone lives in R^{}", k.dim())));
    }
    if n > MAX_DIM {
        return Err(Error::TooLarge {
            what: "dimensions for cone minimisation",
            count: n,
            cap: MAX_DIM,
        });
    }
    let ineq = k.ineq_rows();
    if ineq.len() > MAX_CONE_ROWS {
        return Err(Error::TooLarge {
            what: "inequality rows for face enumeration",
            count: ineq.len(),
            cap: MAX_CONE_ROWS,
        });
    }
    let scale = q.sym().norm().max(1.0);
    let cluster_tol = 1e-10 * scale;
    let mut best: (f64, Option<DVector<f64>>) = (f64::INFINITY, None);
    let mut seen: Vec<DMatrix<f64>> = Vec::new();
    for face in subsets(ineq.len()) {
        let mut rows: Vec<DVector<f64>> = k.eq_rows().to_vec();
        rows.extend(face.iter().map(|&i| ineq[i].clone()));
        let basis = SubspaceBasis::null_space_of(&rows, n);
        if basis.dim() == 0 {
            continue;
        }
        // Skip face spans already processed (same projector).
        let proj = basis.matrix() * basis.matrix().transpose();
        if seen.iter().any(|s| (s - &proj).norm() < 1e-9) {
            continue;
        }
        seen.push(proj);
        let v = basis.matrix();
        let reduced = v.transpose() * q.sym() * v;
        let pairs = sorted_eigen(&reduced);
        let mut start = 0;
        while start < pairs.len() {
            let lam = pairs[start].0;
            if lam >= best.0 {
                break;
            }
            let mut end = start + 1;
            while end < pairs.len() && pairs[end].0 - lam <= cluster_tol {
                end += 1;
            }
            let cols: Vec<DVector<f64>> = pairs[start..end].iter().map(|(_, y)| v * y).collect();
            if let Some(w) = cone_point_in_span(k, &cols) {
                let value = q.value(&w);
                if value < best.0 {
                    best = (value, Some(w));
                }
                break;
            }
            start = end;
        }
    }
    Ok(best)
}

/// A unit vector of `K ∩ span(cols)` (cols orthonormal), if nonzero.
fn cone_point_in_span(k: &ConeDesc, cols: &[DVector<f64>]) -> Option<DVector<f64>> {
    let c = cols.len();
    let w = DMatrix::from_columns(cols);
    let eq = k.eq_rows().iter().map(|a| w.transpose() * a).collect();
    let ineq = k.ineq_rows().iter().map(|a| w.transpose() * a).collect();
    let reduced = ConeDesc::new(c, eq, ineq);
    let gens = reduced.generators();
    let y = gens.rays.first().or(gens.lineality.first())?;
    let point = &w * y;
    let norm = point.norm();
    (norm > 0.0).then(|| point / norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Gssosc,
    Gusosc,
    PviClosure,
    PviCritical,
    SmoothPsd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    Corroborated,
}

impl Verdict {
    pub fn ok(self) -> bool {
        self != Verdict::Fails
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    /// Multiplier at which the test failed (when applicable).
    pub lambda: Option<Vec<f64>>,
    /// Graph point `(x, p, v)` for sampled tests.
    pub point: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub direction: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondOrderReport {
    pub condition: Condition,
    pub verdict: Verdict,
    /// Smallest value of the form over the test set (`+inf` when vacuous).
    #[serde(serialize_with = "serfmt::ext")]
    pub modulus: f64,
    pub witness: Option<Witness>,
    /// Multipliers or graph points examined.
    pub checked: usize,
    pub notes: Vec<String>,
}

impl SecondOrderReport {
    fn from_min(condition: Condition, ok: Verdict, modulus: f64, witness: Option<Witness>, checked: usize, tau_pd: f64) -> Self {
        SecondOrderReport {
            condition,
            verdict: if modulus > tau_pd { ok } else { Verdict::Fails },
            modulus,
            witness,
            checked,
            notes: Vec::new(),
        }
    }
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_vec(v.to_vec())
}

/// Null space of the strictly active gradients as the GSSOSC test subspace.
fn strict_null_space(set: &MultiplierSet<f64>, lambda: &[f64], n: usize) -> SubspaceBasis {
    let plus = strict_complement(lambda, &set.active, TAU_CQ);
    let rows: Vec<DVector<f64>> = set
        .active
        .iter()
        .zip(&set.gradients)
        .filter(|(i, _)| plus.contains(i))
        .map(|(_, g)| dvec(g))
        .collect();
    SubspaceBasis::null_space_of(&rows, n)
}

/// Multipliers scanned by GSSOSC: vertices, pairwise midpoints, and seeded
/// random convex combinations.
fn gssosc_points(vertices: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = vertices.to_vec();
    for a in 0..vertices.len() {
        for b in a + 1..vertices.len() {
            points.push(vertices[a].iter().zip(&vertices[b]).map(|(x, y)| 0.5 * (x + y)).collect());
        }
    }
    if vertices.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..GSSOSC_RANDOM {
            let weights: Vec<f64> = (0..vertices.len()).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            let total: f64 = weights.iter().sum();
            let m = vertices[0].len();
            points.push((0..m).map(|i| vertices.iter().zip(&weights).map(|(v, w)| v[i] * w / total).sum()).collect());
        }
    }
    points
}

/// GSSOSC at the reference over the multiplier set.
pub fn check_gssosc(model: &ParametricModel, set: &MultiplierSet<f64>, tau_pd: f64, seed: u64) -> Result<SecondOrderReport> {
    let r = model.require_reference()?;
    let bundle = model.bundle_at(&r.x_f64(), &r.p_f64())?;
    let points = gssosc_points(&set.vertices, seed);
    let mut modulus = f64::INFINITY;
    let mut witness = None;
    for lambda in &points {
        let q = QuadForm::new(bundle.lagrangian_jacobian(lambda));
        let (value, w) = min_on_subspace(&q, &strict_null_space(set, lambda, model.n()));
        if value < modulus {
            modulus = value;
            witness = w.map(|w| Witness {
                lambda: Some(lambda.clone()),
                point: None,
                direction: w.iter().copied().collect(),
                value,
            });
        }
    }
    let mut rep = SecondOrderReport::from_min(Condition::Gssosc, Verdict::Holds, modulus, witness, points.len(), tau_pd);
    if set.dimension >= 2 {
        rep.notes.push("multiplier set has dimension >= 2: vertex/edge scan is heuristic".into());
    }
    Ok(rep)
}

/// Configuration of the GUSOSC sampler.
#[derive(Clone, Copy, Debug)]
pub struct GusoscOptions {
    pub eta: f64,
    pub samples: usize,
    pub seed: u64,
    pub tau_act: f64,
    pub tau_pd: f64,
}

/// One graph point of the solution map near the reference.
#[derive(Clone, Debug)]
pub struct GraphPoint {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

const ATTEMPTS_PER_SAMPLE: usize = 50;

/// Draws a point of `gph Psi ∩ B_eta(reference)`: perturb `(x, p)`, restore a
/// random subset of the reference active constraints by Gauss-Newton, pick
/// `lambda >= 0` near a reference vertex and set `v = L(x, p, lambda)`.
pub fn sample_graph_point<R: Rng>(
    model: &ParametricModel,
    ref_vertices: &[Vec<f64>],
    eta: f64,
    tau_act: f64,
    rng: &mut R,
) -> Option<GraphPoint> {
    let r = model.reference()?;
    let (x0, p0, v0) = (r.x_f64(), r.p_f64(), r.v_f64());
    let n = model.n();
    let d = model.d();
    let ref_active: Vec<usize> = {
        let phi = model.eval_phi(x0.as_slice(), p0.as_slice()).ok()?;
        (0..model.m()).filter(|&i| phi[i].abs() <= tau_act).collect()
    };
    for _ in 0..ATTEMPTS_PER_SAMPLE {
        let keep: Vec<usize> = if rng.gen_bool(0.5) {
            ref_active.clone()
        } else {
            ref_active.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
        };
        let dx = sample_ball(rng, n, eta / 3.0);
        let dp = sample_ball(rng, d, eta / 3.0);
        let p = DVector::from_fn(d, |j, _| p0[j] + dp[j]);
        let mut x = DVector::from_fn(n, |j, _| x0[j] + dx[j]);
        if !restore(model, &mut x, &p, &keep) {
            continue;
        }
        let Ok(bundle) = model.bundle_at(&x, &p) else { continue };
        if bundle.phi.iter().any(|&v| v > FEASIBILITY_TOL) {
            continue;
        }
        let active: Vec<usize> = (0..model.m()).filter(|&i| bundle.phi[i].abs() <= tau_act).collect();
        let gnorm: f64 = active.iter().map(|&i| dvec(&bundle.grad_phi[i]).norm()).sum::<f64>().max(1.0);
        let base = if ref_vertices.is_empty() {
            vec![0.0; model.m()]
        } else {
            ref_vertices[rng.gen_range(0..ref_vertices.len())].clone()
        };
        let mut lambda = vec![0.0; model.m()];
        for &i in &active {
            let noise = rng.gen_range(-1.0..=1.0) * eta / (3.0 * gnorm);
            lambda[i] = (base[i] + noise).max(0.0);
        }
        let mut v = dvec(&bundle.f);
        for &i in &active {
            v += dvec(&bundle.grad_phi[i]) * lambda[i];
        }
        let dist2 = (&x - &x0).norm_squared() + (&p - &p0).norm_squared() + (&v - &v0).norm_squared();
        if dist2.sqrt() <= eta {
            return Some(GraphPoint { x, p, v });
        }
    }
    None
}

/// Gauss-Newton (minimum-norm steps) towards `phi_J(x, p) = 0`.
fn restore(model: &ParametricModel, x: &mut DVector<f64>, p: &DVector<f64>, keep: &[usize]) -> bool {
    if keep.is_empty() {
        return true;
    }
    for _ in 0..30 {
        let Ok(phi) = model.eval_phi(x.as_slice(), p.as_slice()) else { return false };
        let res = DVector::from_fn(keep.len(), |k, _| phi[keep[k]]);
        if res.amax() <= 1e-13 {
            return true;
        }
        let Ok(grads) = model.eval_grad_phi(x.as_slice(), p.as_slice()) else { return false };
        let g = DMatrix::from_fn(keep.len(), model.n(), |k, j| grads[keep[k]][j]);
        let Ok(step) = g.clone().pseudo_inverse(1e-12) else { return false };
        *x -= step * res;
    }
    false
}

/// Cone `{ u : <g_i,u> = 0 (i in I+), <g_i,u> >= 0 (i in I \ I+) }`.
pub fn gusosc_cone(set: &MultiplierSet<f64>, lambda: &[f64], n: usize) -> ConeDesc {
    let plus = strict_complement(lambda, &set.active, TAU_CQ);
    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    for (i, g) in set.active.iter().zip(&set.gradients) {
        if plus.contains(i) {
            eq.push(dvec(g));
        } else {
            ineq.push(-dvec(g));
        }
    }
    ConeDesc::new(n, eq, ineq)
}

/// Smallest GUSOSC form value at one graph point, over the vertices of its
/// multiplier set.
fn gusosc_at(model: &ParametricModel, point: &GraphPoint, tau_act: f64) -> Result<(f64, Option<Witness>)> {
    let set = multiplier_polytope(model, point.x.as_slice(), point.p.as_slice(), point.v.as_slice(), tau_act)?;
    let bundle = model.bundle_at(&point.x, &point.p)?;
    let mut best = (f64::INFINITY, None);
    for lambda in &set.vertices {
        let q = QuadForm::new(bundle.lagrangian_jacobian(lambda));
        let (value, w) = min_on_cone(&q, &gusosc_cone(&set, lambda, model.n()))?;
        if value < best.0 {
            best = (
                value,
                w.map(|w| Witness {
                    lambda: Some(lambda.clone()),
                    point: Some((point.x.iter().copied().collect(), point.p.iter().copied().collect(), point.v.iter().copied().collect())),
                    direction: w.iter().copied().collect(),
                    value,
                }),
            );
        }
    }
    Ok(best)
}

/// Sampled GUSOSC: `l_hat` is the minimum over the reference point and
/// `samples` graph points in `B_eta`.
pub fn check_gusosc(model: &ParametricModel, opts: &GusoscOptions) -> Result<SecondOrderReport> {
    let r = model.require_reference()?;
    let ref_set = reference_multipliers(model, opts.tau_act)?.to_f64();
    let reference = GraphPoint {
        x: r.x_f64(),
        p: r.p_f64(),
        v: r.v_f64(),
    };
    let sampled: Vec<Option<GraphPoint>> = (0..opts.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(s as u64 + 1);
            sample_graph_point(model, &ref_set.vertices, opts.eta, opts.tau_act, &mut rng)
        })
        .collect();
    let accepted: Vec<GraphPoint> = sampled.into_iter().flatten().collect();
    if accepted.is_empty() && opts.samples > 0 {
        return Err(Error::NoSamples(format!("no graph point found within eta = {}", opts.eta)));
    }
    let mut points = vec![reference];
    points.extend(accepted);
    let results: Vec<Result<(f64, Option<Witness>)>> = points.par_iter().map(|pt| gusosc_at(model, pt, opts.tau_act)).collect();
    let mut modulus = f64::INFINITY;
    let mut witness = None;
    let mut skipped = 0;
    for res in results {
        match res {
            Ok((value, w)) => {
                if value < modulus {
                    modulus = value;
                    witness = w;
                }
            }
            Err(Error::UnboundedMultipliers { .. }) | Err(Error::NoMultiplier) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let mut rep = SecondOrderReport::from_min(Condition::Gusosc, Verdict::Corroborated, modulus, witness, points.len() - skipped, opts.tau_pd);
    if skipped > 0 {
        rep.notes.push(format!("{skipped} sampled points skipped (multiplier set empty or unbounded)"));
    }
    if modulus == f64::INFINITY {
        rep.notes.push("every sampled cone is {0}: the condition holds vacuously".into());
    }
    Ok(rep)
}

/// Pair of pointwise tests for a fixed polyhedron.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PviPointwise {
    /// On `cl[T - T] ∩ {v_hat}^perp`.
    pub closure: SecondOrderReport,
    /// On `span(K - K)`; decides the combined verdict.
    pub critical: SecondOrderReport,
    pub verdict: Verdict,
}

/// Pointwise tests for constraints affine in x and free of p.
pub fn check_pvi_pointwise(model: &ParametricModel, tau_act: f64, tau_pd: f64) -> Result<PviPointwise> {
    if !model.parameter_free_polyhedron() {
        return Err(Error::Unsupported("pointwise test needs a fixed polyhedron (affine in x, free of p)".into()));
    }
    let r = model.require_reference()?;
    let (x, p) = (r.x_f64(), r.p_f64());
    let active = crate::cone::active_set(model, x.as_slice(), p.as_slice(), tau_act)?;
    let t = tangent_cone(model, &x, &p, &active)?;
    let v_hat = r.v_hat_f64();
    let k = critical_cone(&t, &v_hat)?;
    let q = QuadForm::new(model.bundle_at(&x, &p)?.jacobian());

    let closure_space = span_difference(&t).intersect_hyperplane(&v_hat);
    let report = |cond, space: &SubspaceBasis| {
        let (value, w) = min_on_subspace(&q, space);
        let witness = w.map(|w| Witness {
            lambda: None,
            point: None,
            direction: w.iter().copied().collect(),
            value,
        });
        SecondOrderReport::from_min(cond, Verdict::Holds, value, witness, 1, tau_pd)
    };
    let closure = report(Condition::PviClosure, &closure_space);
    let critical = report(Condition::PviCritical, &span_difference(&k));
    let verdict = critical.verdict;
    Ok(PviPointwise { closure, critical, verdict })
}

/// Positive definiteness of the symmetric part of `grad_x f` for `m = 0`.
pub fn check_smooth_psd(model: &ParametricModel, tau_pd: f64) -> Result<SecondOrderReport> {
    if model.m() != 0 {
        return Err(Error::Unsupported("smooth test needs a model without constraints".into()));
    }
    let r = model.require_reference()?;
    let q = QuadForm::new(model.bundle_at(&r.x_f64(), &r.p_f64())?.jacobian());
    let (value, w) = min_on_subspace(&q, &SubspaceBasis::full(model.n()));
    let witness = w.map(|w| Witness {
        lambda: None,
        point: None,
        direction: w.iter().copied().collect(),
        value,
    });
    Ok(SecondOrderReport::from_min(Condition::SmoothPsd, Verdict::Holds, value, witness, 1, tau_pd))
}

/// Bordered determinant for one multiplier vertex and basis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScocProbe {
    pub lambda: Vec<String>,
    /// 1-based basis indices.
    pub basis: Vec<usize>,
    /// Exact determinant as a fraction.
    pub determinant: String,
    /// `|det|` after scaling every row to unit norm.
    pub scaled_abs: f64,
    pub violation: bool,
}

const SCOC_ZERO: f64 = 1e-9;

/// `det [[grad_x L, G^T], [-G, 0]]` in exact arithmetic at the reference.
pub fn scoc_probe(model: &ParametricModel, lambda: &[Rational], basis: &[usize]) -> Result<ScocProbe> {
    let r = model.require_reference()?;
    let n = model.n();
    let b = model.eval_bundle::<Rational>(&r.x, &r.p)?;
    let g: Rows<Rational> = basis.iter().map(|&i| b.grad_phi[i].clone()).collect();
    if !g.is_empty() && rank(&g) < g.len() {
        return Err(Error::DependentRows);
    }
    let size = n + basis.len();
    let zero = Rational::from_i64(0);
    let mut a: Rows<Rational> = vec![vec![zero.clone(); size]; size];
    for i in 0..n {
        for j in 0..n {
            let mut v = b.jac_f[i][j].clone();
            for (k, l) in lambda.iter().enumerate() {
                v += l.clone() * b.hess_phi[k][i][j].clone();
            }
            a[i][j] = v;
        }
        for (k, row) in g.iter().enumerate() {
            a[i][n + k] = row[i].clone();
            a[n + k][i] = -row[i].clone();
        }
    }
    let det = determinant(&a);
    let scaled: Rows<f64> = a
        .iter()
        .map(|row| {
            let f: Vec<f64> = row.iter().map(Scalar::to_f64).collect();
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                f.iter().map(|v| v / norm).collect()
            } else {
                f
            }
        })
        .collect();
    let scaled_abs = determinant(&scaled).abs();
    Ok(ScocProbe {
        lambda: lambda.iter().map(rational_to_string).collect(),
        basis: basis.iter().map(|i| i + 1).collect(),
        determinant: rational_to_string(&det),
        scaled_abs,
        violation: scaled_abs < SCOC_ZERO,
    })
}

/// Probes each exact vertex with `J = I_+(lambda)` when those gradients are
/// independent.
pub fn scoc_probe_vertices(model: &ParametricModel, set: &MultiplierSet<Rational>) -> Result<Vec<ScocProbe>> {
    let mut out = Vec::new();
    for lambda in &set.vertices {
        let lf: Vec<f64> = lambda.iter().map(Scalar::to_f64).collect();
        let plus = strict_complement(&lf, &set.active, TAU_CQ);
        match scoc_probe(model, lambda, &plus) {
            Ok(p) => out.push(p),
            Err(Error::DependentRows) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
