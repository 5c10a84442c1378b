//! Solvers for `v ∈ f(x,p) + N_{C(p)}(x)` near the reference and the
//! localization table `θ(v,p)` built from them.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone::Polyhedron;
use crate::error::{Error, Result};
use crate::linalg::subsets;
use crate::model::{ParametricModel, FEASIBILITY_TOL};

/// Constraints accepted by face enumeration.
pub const MAX_FACES_M: usize = 12;
/// Fixed-point residual accepted as converged.
pub const SOLVE_TOL: f64 = 1e-9;
/// Default half-width of the uniqueness box around the reference `x`.
pub const X_RADIUS: f64 = 0.2;
const DEDUPE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProjectedIteration,
    FaceEnumeration,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ProjectedIteration => "projected-iteration",
            Method::FaceEnumeration => "face-enumeration",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    UniqueInBox,
    MultipleFound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOutcome {
    #[serde(serialize_with = "crate::serfmt::dvec")]
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub multiplicity: Multiplicity,
    pub converged: bool,
    /// Multipliers (full length) for face solutions.
    pub lambda: Option<Vec<f64>>,
    /// Step size actually used by the projected iteration.
    pub step: Option<f64>,
}

/// `|x - Proj(x - gamma (f(x,p) - v))|`.
pub fn fixed_point_residual(model: &ParametricModel, poly: &Polyhedron, x: &DVector<f64>, v: &DVector<f64>, p: &DVector<f64>, gamma: f64) -> Result<f64> {
    let f = DVector::from_vec(model.eval_f(x.as_slice(), p.as_slice())?);
    let z = x - (f - v) * gamma;
    Ok((x - poly.project(&z, Some(x))?.point).norm())
}

/// Step size rule for the projected iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// `0.9 kappa / L^2` from known moduli.
    FromModuli { kappa: f64, lipschitz: f64 },
    Fixed(f64),
    /// `1e-2`, halved on divergence.
    Default,
}

pub const DEFAULT_STEP: f64 = 1e-2;
const MAX_HALVINGS: usize = 10;

/// `x <- Proj_{C(p)}(x - gamma (f(x,p) - v))` until the step is below 1e-13.
pub fn solve_projected(model: &ParametricModel, v: &DVector<f64>, p: &DVector<f64>, x0: &DVector<f64>, step: Step, max_iter: usize) -> Result<SolveOutcome> {
    let poly = Polyhedron::from_model(model, p)?;
    let mut gamma = match step {
        Step::FromModuli { kappa, lipschitz } if kappa > 0.0 && lipschitz > 0.0 => 0.9 * kappa / (lipschitz * lipschitz),
        Step::Fixed(g) if g > 0.0 => g,
        Step::Default => DEFAULT_STEP,
        _ => return Err(Error::InvalidArgument("step size must be positive".into())),
    };
    let halving = matches!(step, Step::Default);
    let start = poly.project(x0, None)?.point;
    let mut total = 0;
    for _ in 0..=MAX_HALVINGS {
        let mut x = start.clone();
        let mut diverged = false;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let f = DVector::from_vec(model.eval_f(x.as_slice(), p.as_slice())?);
            let z = &x - (f - v) * gamma;
            let next = poly.project(&z, Some(&x))?.point;
            let delta = (&next - &x).norm();
            x = next;
            if !delta.is_finite() || x.norm() > 1e8 {
                diverged = true;
                break;
            }
            if delta < 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
        total += iterations;
        if diverged && halving {
            gamma *= 0.5;
            continue;
        }
        let residual = if diverged { f64::INFINITY } else { fixed_point_residual(model, &poly, &x, v, p, gamma)? };
        return Ok(SolveOutcome {
            converged: residual < SOLVE_TOL,
            x,
            residual,
            iterations: total,
            method: Method::ProjectedIteration,
            multiplicity: Multiplicity::UniqueInBox,
            lambda: None,
            step: Some(gamma),
        });
    }
    Ok(SolveOutcome {
        x: start,
        residual: f64::INFINITY,
        iterations: total,
        method: Method::ProjectedIteration,
        multiplicity: Multiplicity::UniqueInBox,
        converged: false,
        lambda: None,
        step: Some(gamma),
    })
}

/// Axis-aligned box `|x - center|_inf <= radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchBox {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl SearchBox {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (x - &self.center).amax() <= self.radius + 1e-12
    }
}

/// All KKT points found by face enumeration, plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSolutions {
    pub solutions: Vec<SolveOutcome>,
    pub singular_faces: usize,
}

/// KKT residual of `(x, lambda)`: stationarity, feasibility, sign and
/// complementarity.
fn kkt_residual(model: &ParametricModel, x: &DVector<f64>, p: &DVector<f64>, v: &DVector<f64>, lambda: &[f64]) -> Result<f64> {
    let b = model.bundle_at(x, p)?;
    let mut stat = DVector::from_vec(b.f.clone()) - v;
    let mut worst: f64 = 0.0;
    for (i, &l) in lambda.iter().enumerate() {
        stat += DVector::from_vec(b.grad_phi[i].clone()) * l;
        worst = worst.max(-l).max((l * b.phi[i]).abs());
    }
    for &phi in &b.phi {
        worst = worst.max(phi);
    }
    Ok(worst.max(stat.amax()))
}

/// Newton on `f + sum_J lambda_i grad phi_i = v, phi_J = 0`. Returns `None`
/// for singular or non-convergent faces.
fn solve_face(model: &ParametricModel, v: &DVector<f64>, p: &DVector<f64>, face: &[usize], start: &DVector<f64>) -> Result<Option<(DVector<f64>, DVector<f64>, usize)>> {
    let n = model.n();
    let k = face.len();
    let mut x = start.clone();
    let mut lam = DVector::zeros(k);
    for iter in 1..=60 {
        let b = model.bundle_at(&x, p)?;
        let mut res = DVector::zeros(n + k);
        for j in 0..n {
            res[j] = b.f[j] - v[j] + face.iter().enumerate().map(|(a, &i)| lam[a] * b.grad_phi[i][j]).sum::<f64>();
        }
        for (a, &i) in face.iter().enumerate() {
            res[n + a] = b.phi[i];
        }
        let mut jac = DMatrix::zeros(n + k, n + k);
        let hl = b.lagrangian_jacobian(&{
            let mut full = vec![0.0; model.m()];
            for (a, &i) in face.iter().enumerate() {
                full[i] = lam[a];
            }
            full
        });
        jac.view_mut((0, 0), (n, n)).copy_from(&hl);
        for (a, &i) in face.iter().enumerate() {
            for j in 0..n {
                jac[(j, n + a)] = b.grad_phi[i][j];
                jac[(n + a, j)] = b.grad_phi[i][j];
            }
        }
        let sv = jac.clone().singular_values();
        let smax = sv.max();
        if n + k > 0 && sv.min() <= 1e-12 * smax.max(1.0) {
            return Ok(None);
        }
        let Some(delta) = jac.lu().solve(&res) else {
            return Ok(None);
        };
        x -= delta.rows(0, n);
        lam -= delta.rows(n, k);
        if delta.amax() <= 1e-14 * (1.0 + x.amax()) || res.amax() <= 1e-15 {
            return Ok(Some((x, lam, iter)));
        }
        if !x.amax().is_finite() {
            return Ok(None);
        }
    }
    // Accept slow final convergence if the residual is tiny.
    let b = model.bundle_at(&x, p)?;
    let small = face.iter().all(|&i| b.phi[i].abs() < 1e-10);
    Ok(small.then_some((x, lam, 60)))
}

/// Every KKT point in `bbox`, by enumerating active-set guesses.
pub fn solve_faces(model: &ParametricModel, v: &DVector<f64>, p: &DVector<f64>, bbox: &SearchBox) -> Result<FaceSolutions> {
    let m = model.m();
    if m > MAX_FACES_M {
        return Err(Error::TooLarge {
            what: "constraints for face enumeration",
            count: m,
            cap: MAX_FACES_M,
        });
    }
    let mut found: Vec<SolveOutcome> = Vec::new();
    let mut singular = 0;
    for face in subsets(m) {
        if face.len() > model.n() {
            // More equations than unknowns in x: covered by smaller faces.
            continue;
        }
        let Some((x, lam, iterations)) = solve_face(model, v, p, &face, &bbox.center)? else {
            singular += 1;
            continue;
        };
        if lam.iter().any(|&l| l < -1e-10) || !bbox.contains(&x) {
            continue;
        }
        let phi = model.eval_phi(x.as_slice(), p.as_slice())?;
        if phi.iter().any(|&f| f > FEASIBILITY_TOL) {
            continue;
        }
        if found.iter().any(|s| (&s.x - &x).amax() <= DEDUPE) {
            continue;
        }
        let mut lambda = vec![0.0; m];
        for (a, &i) in face.iter().enumerate() {
            lambda[i] = lam[a].max(0.0);
        }
        let residual = kkt_residual(model, &x, p, v, &lambda)?;
        found.push(SolveOutcome {
            x,
            residual,
            iterations,
            method: Method::FaceEnumeration,
            multiplicity: Multiplicity::UniqueInBox,
            converged: residual < SOLVE_TOL,
            lambda: Some(lambda),
            step: None,
        });
    }
    if found.len() > 1 {
        for s in &mut found {
            s.multiplicity = Multiplicity::MultipleFound;
        }
    }
    Ok(FaceSolutions {
        solutions: found,
        singular_faces: singular,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableEntry {
    #[serde(serialize_with = "crate::serfmt::dvec")]
    pub v: DVector<f64>,
    #[serde(serialize_with = "crate::serfmt::dvec")]
    pub p: DVector<f64>,
    #[serde(serialize_with = "crate::serfmt::dvec")]
    pub x: DVector<f64>,
    pub residual: f64,
    pub method: Method,
    /// Tensor-grid node (as opposed to a random interior point).
    pub grid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationTable {
    pub n: usize,
    pub d: usize,
    pub rho_v: f64,
    pub rho_p: f64,
    pub x_radius: f64,
    /// Number of radius halvings needed for uniqueness.
    pub shrinks: usize,
    pub singular_faces: usize,
    pub entries: Vec<TableEntry>,
}

impl LocalizationTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("v{i}")).collect();
        header.extend((1..=self.d).map(|i| format!("p{i}")));
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        header.push("residual".into());
        header.push("method".into());
        wtr.write_record(&header)?;
        for e in &self.entries {
            let mut rec: Vec<String> = e.v.iter().chain(e.p.iter()).chain(e.x.iter()).map(|v| v.to_string()).collect();
            rec.push(e.residual.to_string());
            rec.push(e.method.as_str().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOptions {
    pub rho_v: f64,
    pub rho_p: f64,
    /// Nodes per axis in v and in p.
    pub grid_v: usize,
    pub grid_p: usize,
    /// Extra random interior points.
    pub random: usize,
    pub x_radius: f64,
    pub max_shrinks: usize,
    pub seed: u64,
}

fn axis(k: usize) -> Vec<f64> {
    if k <= 1 {
        vec![0.0]
    } else {
        (0..k).map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64).collect()
    }
}

/// All points of `center + rho * axis^dim`.
fn tensor_grid(center: &DVector<f64>, rho: f64, k: usize) -> Vec<DVector<f64>> {
    let ticks = axis(k);
    let dim = center.len();
    let total = ticks.len().pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut pt = center.clone();
            for j in (0..dim).rev() {
                pt[j] += rho * ticks[idx % ticks.len()];
                idx /= ticks.len();
            }
            pt
        })
        .collect()
}

/// `θ(v,p)` on a tensor grid around the reference, shrinking both radii by
/// halves while some node has several solutions in the box.
pub fn build_localization(model: &ParametricModel, opts: &GridOptions) -> Result<LocalizationTable> {
    let r = model.require_reference()?;
    let (x0, p0, v0) = (r.x_f64(), r.p_f64(), r.v_f64());
    let bbox = SearchBox {
        center: x0.clone(),
        radius: opts.x_radius,
    };
    let mut rho_v = opts.rho_v;
    let mut rho_p = opts.rho_p;
    for shrinks in 0..=opts.max_shrinks {
        let mut nodes: Vec<(DVector<f64>, DVector<f64>, bool)> = Vec::new();
        let vs = tensor_grid(&v0, rho_v, opts.grid_v);
        let ps = tensor_grid(&p0, rho_p, opts.grid_p);
        for p in &ps {
            for v in &vs {
                nodes.push((v.clone(), p.clone(), true));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random {
            let v = DVector::from_fn(model.n(), |j, _| v0[j] + rho_v * rng.gen_range(-1.0..=1.0));
            let p = DVector::from_fn(model.d(), |j, _| p0[j] + rho_p * rng.gen_range(-1.0..=1.0));
            nodes.push((v, p, false));
        }
        let solved: Vec<Result<FaceSolutions>> = nodes.par_iter().map(|(v, p, _)| solve_faces(model, v, p, &bbox)).collect();
        let mut entries = Vec::with_capacity(nodes.len());
        let mut singular = 0;
        let mut multiple: Option<String> = None;
        for ((v, p, grid), res) in nodes.into_iter().zip(solved) {
            let sols = res?;
            singular += sols.singular_faces;
            match sols.solutions.len() {
                0 => {
                    return Err(Error::NotSingleValued(format!("no solution in the box at v = {:?}, p = {:?}", v.as_slice(), p.as_slice())));
                }
                1 => {
                    let s = sols.solutions.into_iter().next().expect("one solution");
                    entries.push(TableEntry {
                        v,
                        p,
                        x: s.x,
                        residual: s.residual,
                        method: s.method,
                        grid,
                    });
                }
                k => {
                    multiple = Some(format!("{k} solutions at v = {:?}, p = {:?}", v.as_slice(), p.as_slice()));
                    break;
                }
            }
        }
        match multiple {
            None => {
                return Ok(LocalizationTable {
                    n: model.n(),
                    d: model.d(),
                    rho_v,
                    rho_p,
                    x_radius: opts.x_radius,
                    shrinks,
                    singular_faces: singular,
                    entries,
                })
            }
            Some(w) if shrinks == opts.max_shrinks => return Err(Error::NotSingleValued(w)),
            Some(_) => {
                rho_v *= 0.5;
                rho_p *= 0.5;
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}
