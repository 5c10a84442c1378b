//! Polyhedral cone geometry: tangent and critical cones, polars, spans,
//! membership, and Euclidean projection onto polyhedra.
//!
//! Cones are stored in facet form `{ w : E w = 0, G w <= 0 }` with unit rows.
//! Generators (lineality basis plus extreme rays) are computed on demand with
//! the double description method.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{null_space, orthonormal_span, subsets};
use crate::lp::{LinearProgram, Sense};
use crate::model::ParametricModel;
use crate::scalar::Scalar;

/// Membership tolerance on unit-normalised rows and directions.
pub const TAU_CONE: f64 = 1e-9;
/// Default active-set tolerance `|phi_i| <= TAU_ACT`.
pub const TAU_ACT: f64 = 1e-7;
/// Upper limits for exact enumeration.
pub const MAX_DIM: usize = 8;
pub const MAX_ROWS: usize = 16;

const ZERO_ROW: f64 = 1e-14;
const SIGN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeDesc {
    n: usize,
    #[serde(serialize_with = "ser_rows")]
    eq: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_rows")]
    ineq: Vec<DVector<f64>>,
}

fn ser_rows<S: serde::Serializer>(rows: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let plain: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().copied().collect()).collect();
    plain.serialize(s)
}

/// Lineality basis and extreme rays of a polyhedral cone.
#[derive(Clone, Debug, Default)]
pub struct Generators {
    pub lineality: Vec<DVector<f64>>,
    pub rays: Vec<DVector<f64>>,
}

impl Generators {
    pub fn all(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.lineality.iter().chain(self.rays.iter())
    }

    pub fn is_trivial(&self) -> bool {
        self.lineality.is_empty() && self.rays.is_empty()
    }
}

fn normalized(row: &DVector<f64>) -> Option<DVector<f64>> {
    let norm = row.norm();
    (norm > ZERO_ROW).then(|| row / norm)
}

impl ConeDesc {
    /// Zero rows are dropped; the remaining rows are scaled to unit length.
    pub fn new(n: usize, eq: Vec<DVector<f64>>, ineq: Vec<DVector<f64>>) -> Self {
        for r in eq.iter().chain(&ineq) {
            assert_eq!(r.len(), n, "cone row has wrong dimension");
            assert!(r.iter().all(|v| v.is_finite()), "cone rows must be finite");
        }
        ConeDesc {
            n,
            eq: eq.iter().filter_map(normalized).collect(),
            ineq: ineq.iter().filter_map(normalized).collect(),
        }
    }

    pub fn full(n: usize) -> Self {
        ConeDesc::new(n, Vec::new(), Vec::new())
    }

    /// `{0}` as a cone.
    pub fn origin(n: usize) -> Self {
        let eq = (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        ConeDesc::new(n, eq, Vec::new())
    }

    /// A subspace (given by spanning columns) as a cone.
    pub fn from_subspace(basis: &SubspaceBasis) -> Self {
        let cols: Vec<DVector<f64>> = basis.columns();
        let eq = null_space(&cols, basis.n())
            .column_iter()
            .map(|c| c.into_owned())
            .collect();
        ConeDesc::new(basis.n(), eq, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eq_rows(&self) -> &[DVector<f64>] {
        &self.eq
    }

    pub fn ineq_rows(&self) -> &[DVector<f64>] {
        &self.ineq
    }

    pub fn with_equality(&self, row: DVector<f64>) -> Self {
        let mut eq = self.eq.clone();
        eq.push(row);
        ConeDesc::new(self.n, eq, self.ineq.clone())
    }

    /// Membership up to `tol`, measured on the unit direction of `w`.
    pub fn contains_tol(&self, w: &DVector<f64>, tol: f64) -> bool {
        let norm = w.norm();
        if norm <= ZERO_ROW {
            return true;
        }
        let u = w / norm;
        self.eq.iter().all(|a| a.dot(&u).abs() <= tol) && self.ineq.iter().all(|a| a.dot(&u) <= tol)
    }

    pub fn contains(&self, w: &DVector<f64>) -> bool {
        self.contains_tol(w, TAU_CONE)
    }

    /// Largest constraint violation of the unit direction of `w`.
    pub fn violation(&self, w: &DVector<f64>) -> f64 {
        let norm = w.norm();
        if norm <= ZERO_ROW {
            return 0.0;
        }
        let u = w / norm;
        let e = self.eq.iter().map(|a| a.dot(&u).abs()).fold(0.0, f64::max);
        let g = self.ineq.iter().map(|a| a.dot(&u)).fold(0.0, f64::max);
        e.max(g)
    }

    /// Generators by the double description method.
    pub fn generators(&self) -> Generators {
        let basis = null_space(&self.eq, self.n);
        let k = basis.ncols();
        if k == 0 {
            return Generators::default();
        }
        let rows: Vec<DVector<f64>> = self.ineq.iter().map(|a| basis.transpose() * a).collect();
        let reduced = double_description(k, &rows);
        let lift = |y: &DVector<f64>| {
            let w = &basis * y;
            let norm = w.norm();
            w / norm
        };
        Generators {
            lineality: reduced.lineality.iter().map(lift).collect(),
            rays: reduced.rays.iter().map(lift).collect(),
        }
    }

    /// Whether the cone is `{0}`.
    pub fn is_origin(&self) -> bool {
        self.generators().is_trivial()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string()];
        header.extend((1..=self.n).map(|i| format!("a{i}")));
        wtr.write_record(&header)?;
        for (kind, rows) in [("eq", &self.eq), ("ineq", &self.ineq)] {
            for r in rows {
                let mut rec = vec![kind.to_string()];
                rec.extend(r.iter().map(|v| v.to_string()));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

impl Generators {
    pub fn write_csv<W: Write>(&self, n: usize, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string()];
        header.extend((1..=n).map(|i| format!("g{i}")));
        wtr.write_record(&header)?;
        for (kind, rows) in [("line", &self.lineality), ("ray", &self.rays)] {
            for r in rows {
                let mut rec = vec![kind.to_string()];
                rec.extend(r.iter().map(|v| v.to_string()));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

struct DdRay {
    dir: DVector<f64>,
    /// Indices of processed inequalities that are tight at this ray.
    tight: Vec<usize>,
}

/// Generators of `{ y in R^k : a_i . y <= 0 }`.
fn double_description(k: usize, rows: &[DVector<f64>]) -> Generators {
    let mut lineality: Vec<DVector<f64>> = (0..k)
        .map(|i| DVector::from_fn(k, |j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    let mut rays: Vec<DdRay> = Vec::new();

    for (idx, a) in rows.iter().enumerate() {
        if a.norm() <= ZERO_ROW {
            continue;
        }
        let products: Vec<f64> = lineality.iter().map(|l| a.dot(l)).collect();
        let pivot = products
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .filter(|(_, s)| s.abs() > SIGN_TOL)
            .map(|(i, _)| i);

        if let Some(i0) = pivot {
            let l0 = lineality[i0].clone();
            let s0 = products[i0];
            let mut next_lin = Vec::with_capacity(lineality.len() - 1);
            for (i, l) in lineality.iter().enumerate() {
                if i != i0 {
                    next_lin.push(l - &l0 * (products[i] / s0));
                }
            }
            lineality = orthonormal_span(&next_lin, k).column_iter().map(|c| c.into_owned()).collect();
            for r in rays.iter_mut() {
                let s = a.dot(&r.dir);
                r.dir = &r.dir - &l0 * (s / s0);
                let norm = r.dir.norm();
                r.dir /= norm;
                r.tight.push(idx);
            }
            let prev_tight: Vec<usize> = (0..idx).collect();
            let d = if s0 > 0.0 { -l0 } else { l0 };
            // Project the new ray off the remaining lineality.
            let mut d = d;
            for l in &lineality {
                d = &d - l * l.dot(&d);
            }
            let norm = d.norm();
            rays.push(DdRay {
                dir: d / norm,
                tight: prev_tight,
            });
            continue;
        }

        let values: Vec<f64> = rays.iter().map(|r| a.dot(&r.dir)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| values[i] > SIGN_TOL).collect();
        if pos.is_empty() {
            for (r, v) in rays.iter_mut().zip(&values) {
                if v.abs() <= SIGN_TOL {
                    r.tight.push(idx);
                }
            }
            continue;
        }
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| values[i] < -SIGN_TOL).collect();
        let pointed_dim = k - lineality.len();
        let mut created = Vec::new();
        for &ip in &pos {
            for &jn in &neg {
                let common: Vec<usize> = rays[ip]
                    .tight
                    .iter()
                    .copied()
                    .filter(|t| rays[jn].tight.contains(t))
                    .collect();
                if common.len() + 2 < pointed_dim {
                    continue;
                }
                let adjacent = (0..rays.len())
                    .filter(|&o| o != ip && o != jn)
                    .all(|o| !common.iter().all(|t| rays[o].tight.contains(t)));
                if !adjacent {
                    continue;
                }
                let dir = &rays[jn].dir * values[ip] - &rays[ip].dir * values[jn];
                let norm = dir.norm();
                if norm <= ZERO_ROW {
                    continue;
                }
                let mut tight = common;
                tight.push(idx);
                created.push(DdRay { dir: dir / norm, tight });
            }
        }
        let mut next: Vec<DdRay> = Vec::new();
        for (i, mut r) in rays.into_iter().enumerate() {
            if values[i] > SIGN_TOL {
                continue;
            }
            if values[i].abs() <= SIGN_TOL {
                r.tight.push(idx);
            }
            next.push(r);
        }
        next.extend(created);
        rays = next;
    }

    // Drop numerical duplicates.
    let mut unique: Vec<DVector<f64>> = Vec::new();
    for r in rays {
        if !unique.iter().any(|u| (u - &r.dir).norm() < 1e-9) {
            unique.push(r.dir);
        }
    }
    Generators { lineality, rays: unique }
}

/// Orthonormal basis of a linear subspace of `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    v: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn from_orthonormal(v: DMatrix<f64>) -> Self {
        SubspaceBasis { v }
    }

    pub fn span_of(vectors: &[DVector<f64>], n: usize) -> Self {
        SubspaceBasis {
            v: orthonormal_span(vectors, n),
        }
    }

    pub fn full(n: usize) -> Self {
        SubspaceBasis {
            v: DMatrix::identity(n, n),
        }
    }

    pub fn null_space_of(rows: &[DVector<f64>], n: usize) -> Self {
        SubspaceBasis { v: null_space(rows, n) }
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn columns(&self) -> Vec<DVector<f64>> {
        self.v.column_iter().map(|c| c.into_owned()).collect()
    }

    /// Intersection with the hyperplane orthogonal to `normal`.
    pub fn intersect_hyperplane(&self, normal: &DVector<f64>) -> Self {
        if normal.norm() <= ZERO_ROW || self.dim() == 0 {
            return self.clone();
        }
        let coeffs = self.v.transpose() * normal;
        let inner = null_space(&[coeffs], self.dim());
        SubspaceBasis { v: &self.v * inner }
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        let proj = &self.v * (self.v.transpose() * w);
        (w - proj).norm() <= tol * w.norm().max(1.0)
    }
}

// ---------------------------------------------------------------------------
// Model-level operations

/// Indices with `|phi_i(x,p)| <= tau_act`, ascending.
pub fn active_set<T: Scalar>(model: &ParametricModel, x: &[T], p: &[T], tau_act: f64) -> Result<Vec<usize>> {
    let phi = model.eval_phi(x, p)?;
    let mut active = Vec::new();
    for (i, v) in phi.iter().enumerate() {
        let v = v.to_f64();
        if v > tau_act {
            return Err(Error::Infeasible { index: i + 1, value: v });
        }
        if v.abs() <= tau_act {
            active.push(i);
        }
    }
    Ok(active)
}

/// Active constraint x-gradients at `(x, p)`.
pub fn active_gradients(model: &ParametricModel, x: &DVector<f64>, p: &DVector<f64>, active: &[usize]) -> Result<Vec<DVector<f64>>> {
    let grads = model.eval_grad_phi(x.as_slice(), p.as_slice())?;
    Ok(active.iter().map(|&i| DVector::from_vec(grads[i].clone())).collect())
}

/// `{ w : grad phi_i . w <= 0, i in active }` — exact for constraints affine
/// in x, the linearised cone (exact under MFCQ) otherwise.
pub fn tangent_cone(model: &ParametricModel, x: &DVector<f64>, p: &DVector<f64>, active: &[usize]) -> Result<ConeDesc> {
    let rows = active_gradients(model, x, p, active)?;
    Ok(ConeDesc::new(model.n(), Vec::new(), rows))
}

/// `T ∩ {v_hat}^perp`, after checking that `v_hat` lies in the polar of `T`.
pub fn critical_cone(t: &ConeDesc, v_hat: &DVector<f64>) -> Result<ConeDesc> {
    let norm = v_hat.norm();
    if norm <= TAU_CONE {
        return Ok(t.clone());
    }
    let gens = t.generators();
    let u = v_hat / norm;
    let violation = gens
        .lineality
        .iter()
        .map(|l| l.dot(&u).abs())
        .chain(gens.rays.iter().map(|r| r.dot(&u)))
        .fold(0.0, f64::max);
    if violation > TAU_CONE.sqrt() * 1e-1 {
        return Err(Error::NotNormal { violation });
    }
    Ok(t.with_equality(v_hat.clone()))
}

/// Orthonormal basis of `K - K = span K`.
pub fn span_difference(k: &ConeDesc) -> SubspaceBasis {
    let gens = k.generators();
    let all: Vec<DVector<f64>> = gens.all().cloned().collect();
    SubspaceBasis::span_of(&all, k.dim())
}

/// `K* = { z : <z, w> <= 0 for all w in K }` in facet form.
pub fn polar_cone(k: &ConeDesc) -> ConeDesc {
    let gens = k.generators();
    ConeDesc::new(k.dim(), gens.lineality, gens.rays)
}

// ---------------------------------------------------------------------------
// Polyhedra and projection

/// `{ x : a_i . x <= b_i }`.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    pub a: Vec<DVector<f64>>,
    pub b: Vec<f64>,
    n: usize,
}

/// Result of a projection with its KKT certificate.
#[derive(Clone, Debug)]
pub struct Projection {
    pub point: DVector<f64>,
    /// Active rows and their multipliers.
    pub active: Vec<(usize, f64)>,
    pub kkt_residual: f64,
}

const PROJ_TOL: f64 = 1e-12;
pub const KKT_TOL: f64 = 1e-9;

impl Polyhedron {
    pub fn new(n: usize, a: Vec<DVector<f64>>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len());
        Polyhedron { a, b, n }
    }

    /// `C(p)` for a model whose constraints are affine in x.
    pub fn from_model(model: &ParametricModel, p: &DVector<f64>) -> Result<Self> {
        if !model.all_affine_in_x() {
            return Err(Error::Unsupported("projection needs constraints affine in x".into()));
        }
        let x0 = DVector::zeros(model.n());
        let grads = model.eval_grad_phi(x0.as_slice(), p.as_slice())?;
        let phi = model.eval_phi(x0.as_slice(), p.as_slice())?;
        let a: Vec<DVector<f64>> = grads.into_iter().map(DVector::from_vec).collect();
        let b = phi.iter().map(|v| -v).collect();
        Ok(Polyhedron::new(model.n(), a, b))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a.dot(x) - b)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// Some feasible point, via a phase-one linear program.
    pub fn feasible_point(&self) -> Result<DVector<f64>> {
        if self.m() == 0 {
            return Ok(DVector::zeros(self.n));
        }
        // x = y - z with y, z >= 0.
        let mut lp = LinearProgram::feasibility(2 * self.n);
        for (a, b) in self.a.iter().zip(&self.b) {
            let mut row: Vec<f64> = a.iter().copied().collect();
            row.extend(a.iter().map(|v| -v));
            lp.add_row(row, Sense::Le, *b);
        }
        let (sol, _) = lp.solve().optimal().ok_or(Error::EmptyFeasibleSet)?;
        let x = DVector::from_fn(self.n, |i, _| sol[i] - sol[i + self.n]);
        if !self.contains(&x, 1e-9) {
            return Err(Error::EmptyFeasibleSet);
        }
        Ok(x)
    }

    /// Euclidean projection by a primal active-set method, warm-started from
    /// a feasible `start` when supplied. Falls back to active-set enumeration.
    pub fn project(&self, z: &DVector<f64>, start: Option<&DVector<f64>>) -> Result<Projection> {
        if self.contains(z, 0.0) {
            return Ok(Projection {
                point: z.clone(),
                active: Vec::new(),
                kkt_residual: 0.0,
            });
        }
        let x0 = match start {
            Some(s) if self.contains(s, 1e-12) => s.clone(),
            _ => self.feasible_point()?,
        };
        match self.project_active_set(z, x0) {
            Some(p) if p.kkt_residual < KKT_TOL => Ok(p),
            _ => self.project_by_enumeration(z),
        }
    }

    fn equality_qp(&self, z: &DVector<f64>, work: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        if work.is_empty() {
            return Some((z.clone(), DVector::zeros(0)));
        }
        let k = work.len();
        let gram = DMatrix::from_fn(k, k, |i, j| self.a[work[i]].dot(&self.a[work[j]]));
        let rhs = DVector::from_fn(k, |i, _| self.a[work[i]].dot(z) - self.b[work[i]]);
        let mu = gram.lu().solve(&rhs)?;
        if mu.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut x = z.clone();
        for (i, &w) in work.iter().enumerate() {
            x -= &self.a[w] * mu[i];
        }
        Some((x, mu))
    }

    fn project_active_set(&self, z: &DVector<f64>, mut x: DVector<f64>) -> Option<Projection> {
        let mut work: Vec<usize> = Vec::new();
        let max_iter = 50 * (self.m() + self.n + 1);
        for _ in 0..max_iter {
            let (target, mu) = self.equality_qp(z, &work)?;
            let step = &target - &x;
            if step.norm() <= PROJ_TOL * (1.0 + x.norm()) {
                let (pos, most_negative) = mu
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, v)| (i, *v))
                    .unwrap_or((0, 0.0));
                if most_negative >= -PROJ_TOL {
                    let active: Vec<(usize, f64)> = work.iter().copied().zip(mu.iter().copied()).collect();
                    let kkt_residual = self.kkt_residual(z, &target, &active);
                    return Some(Projection {
                        point: target,
                        active,
                        kkt_residual,
                    });
                }
                work.remove(pos);
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..self.m() {
                if work.contains(&i) {
                    continue;
                }
                let slope = self.a[i].dot(&step);
                if slope > 1e-15 {
                    let room = (self.b[i] - self.a[i].dot(&x)).max(0.0);
                    let t = room / slope;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            x += &step * alpha;
            if let Some(i) = blocking {
                work.push(i);
            }
        }
        None
    }

    fn kkt_residual(&self, z: &DVector<f64>, x: &DVector<f64>, active: &[(usize, f64)]) -> f64 {
        let mut station = x - z;
        let mut comp: f64 = 0.0;
        let mut dual: f64 = 0.0;
        for &(i, mu) in active {
            station += &self.a[i] * mu;
            comp = comp.max((mu * (self.a[i].dot(x) - self.b[i])).abs());
            dual = dual.max(-mu);
        }
        station.norm().max(comp).max(dual).max(self.max_violation(x))
    }

    /// Exhaustive active-set enumeration (small `m`).
    pub fn project_by_enumeration(&self, z: &DVector<f64>) -> Result<Projection> {
        if self.m() > MAX_ROWS {
            return Err(Error::TooLarge {
                what: "constraints for projection enumeration",
                count: self.m(),
                cap: MAX_ROWS,
            });
        }
        let mut best: Option<Projection> = None;
        for work in subsets(self.m()) {
            let Some((x, mu)) = self.equality_qp(z, &work) else {
                continue;
            };
            if mu.iter().any(|&v| v < -1e-10) || !self.contains(&x, 1e-10) {
                continue;
            }
            let active: Vec<(usize, f64)> = work.iter().copied().zip(mu.iter().copied()).collect();
            let kkt_residual = self.kkt_residual(z, &x, &active);
            let better = best.as_ref().is_none_or(|b| kkt_residual < b.kkt_residual);
            if better {
                best = Some(Projection {
                    point: x,
                    active,
                    kkt_residual,
                });
            }
        }
        best.ok_or(Error::EmptyFeasibleSet)
    }
}

/// `Proj_{C(p)}(z)` for a model with constraints affine in x.
pub fn project_polyhedron(model: &ParametricModel, p: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    let poly = Polyhedron::from_model(model, p)?;
    Ok(poly.project(z, None)?.point)
}
