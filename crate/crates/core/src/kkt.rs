//! Constraint qualifications (MFCQ, LICQ, sampled CRCQ) and the Lagrange
//! multiplier polytope with exact vertex enumeration.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cone::active_set;
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, rank, singular_values, solve, subsets, Rows};
use crate::lp::{LinearProgram, Sense};
use crate::model::ParametricModel;
use crate::scalar::{Rational, Scalar};
use crate::serfmt;

/// Threshold for `t* > 0` and for strict complementarity `lambda_i > 0`.
pub const TAU_CQ: f64 = 1e-8;
/// Default CRCQ probe radius.
pub const CRCQ_ETA: f64 = 1e-2;
pub const MAX_ACTIVE: usize = 12;
const MAX_VERTEX_ACTIVE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CqKind {
    Mfcq,
    Licq,
    Crcq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CqVerdict {
    Holds,
    Fails,
    CorroboratedBySampling,
}

impl CqVerdict {
    pub fn ok(self) -> bool {
        self != CqVerdict::Fails
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CqWitness {
    /// `<grad phi_i, d> + t <= 0` for all active i, `|d|_inf <= 1`.
    Direction {
        d: Vec<f64>,
        #[serde(serialize_with = "serfmt::ext")]
        margin: f64,
    },
    RankTable {
        active: usize,
        rank: usize,
        singular_values: Vec<f64>,
    },
    RankProbe {
        subsets: usize,
        samples: usize,
        failure: Option<RankJump>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankJump {
    /// 1-based constraint indices.
    pub subset: Vec<usize>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub rank_at_reference: usize,
    pub rank_at_sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CqReport {
    pub kind: CqKind,
    pub verdict: CqVerdict,
    /// 1-based active indices.
    pub active: Vec<usize>,
    pub witness: CqWitness,
}

fn one_based(ix: &[usize]) -> Vec<usize> {
    ix.iter().map(|i| i + 1).collect()
}

/// MFCQ via `max t s.t. <grad phi_i, d> + t <= 0 (i in I), |d|_inf <= 1`.
/// Run over `Rational` the decision `t* > 0` is exact.
pub fn check_mfcq<T: Scalar>(model: &ParametricModel, x: &[T], p: &[T], tau_act: f64) -> Result<CqReport> {
    let active = active_set(model, x, p, tau_act)?;
    let grads = model.eval_grad_phi(x, p)?;
    let rows: Vec<Vec<T>> = active.iter().map(|&i| grads[i].clone()).collect();
    let (d, t) = mfcq_program(&rows, model.n());
    let verdict = if t > TAU_CQ { CqVerdict::Holds } else { CqVerdict::Fails };
    Ok(CqReport {
        kind: CqKind::Mfcq,
        verdict,
        active: one_based(&active),
        witness: CqWitness::Direction { d, margin: t },
    })
}

/// Returns the witness direction and `t*` (`+inf` when no row is active).
pub fn mfcq_program<T: Scalar>(rows: &[Vec<T>], n: usize) -> (Vec<f64>, f64) {
    if rows.is_empty() {
        return (vec![0.0; n], f64::INFINITY);
    }
    // Variables y = d + 1 in [0, 2]^n and t >= 0.
    let mut objective = vec![T::zero(); n + 1];
    objective[n] = T::one();
    let mut lp = LinearProgram::new(objective);
    for g in rows {
        let mut coeffs = g.clone();
        coeffs.push(T::one());
        let sum = g.iter().cloned().fold(T::zero(), |a, b| a + b);
        lp.add_row(coeffs, Sense::Le, sum);
    }
    for j in 0..n {
        let mut coeffs = vec![T::zero(); n + 1];
        coeffs[j] = T::one();
        lp.add_row(coeffs, Sense::Le, T::from_i64(2));
    }
    let (sol, value) = lp.solve().optimal().expect("MFCQ program is feasible and bounded");
    let d = sol[..n].iter().map(|y| y.to_f64() - 1.0).collect();
    (d, value.to_f64())
}

/// LICQ: full row rank of the active gradients (relative cutoff 1e-8).
pub fn check_licq(model: &ParametricModel, x: &DVector<f64>, p: &DVector<f64>, tau_act: f64) -> Result<CqReport> {
    let active = active_set(model, x.as_slice(), p.as_slice(), tau_act)?;
    let grads = model.eval_grad_phi(x.as_slice(), p.as_slice())?;
    let rows: Vec<DVector<f64>> = active.iter().map(|&i| DVector::from_vec(grads[i].clone())).collect();
    let r = numerical_rank(&rows, model.n());
    Ok(CqReport {
        kind: CqKind::Licq,
        verdict: if r == active.len() { CqVerdict::Holds } else { CqVerdict::Fails },
        active: one_based(&active),
        witness: CqWitness::RankTable {
            active: active.len(),
            rank: r,
            singular_values: singular_values(&rows, model.n()),
        },
    })
}

fn subset_rank(grads: &[Vec<f64>], subset: &[usize], n: usize) -> usize {
    let rows: Vec<DVector<f64>> = subset.iter().map(|&i| DVector::from_vec(grads[i].clone())).collect();
    numerical_rank(&rows, n)
}

/// Samples ranks of every active subset at `samples` points of `B_eta(x, p)`.
/// Constant gradients make the verdict `Holds` outright.
pub fn probe_crcq(
    model: &ParametricModel,
    x: &DVector<f64>,
    p: &DVector<f64>,
    eta: f64,
    samples: usize,
    seed: u64,
    tau_act: f64,
) -> Result<CqReport> {
    if eta <= 0.0 || samples == 0 {
        return Err(Error::InvalidArgument("CRCQ probe needs eta > 0 and at least one sample".into()));
    }
    let active = active_set(model, x.as_slice(), p.as_slice(), tau_act)?;
    if active.len() > MAX_ACTIVE {
        return Err(Error::TooLarge {
            what: "active constraints for CRCQ subsets",
            count: active.len(),
            cap: MAX_ACTIVE,
        });
    }
    let all_subsets: Vec<Vec<usize>> = subsets(active.len())
        .filter(|s| !s.is_empty())
        .map(|s| s.iter().map(|&k| active[k]).collect())
        .collect();
    if active.iter().all(|&i| model.constraints()[i].constant_gradient) {
        return Ok(CqReport {
            kind: CqKind::Crcq,
            verdict: CqVerdict::Holds,
            active: one_based(&active),
            witness: CqWitness::RankProbe {
                subsets: all_subsets.len(),
                samples: 0,
                failure: None,
            },
        });
    }
    let n = model.n();
    let grads0 = model.eval_grad_phi(x.as_slice(), p.as_slice())?;
    let ranks0: Vec<usize> = all_subsets.iter().map(|s| subset_rank(&grads0, s, n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = n + model.d();
    for _ in 0..samples {
        let z = sample_ball(&mut rng, dim, eta);
        let xs: Vec<f64> = (0..n).map(|j| x[j] + z[j]).collect();
        let ps: Vec<f64> = (0..model.d()).map(|j| p[j] + z[n + j]).collect();
        let Ok(grads) = model.eval_grad_phi(&xs, &ps) else {
            continue;
        };
        for (s, &r0) in all_subsets.iter().zip(&ranks0) {
            let r = subset_rank(&grads, s, n);
            if r != r0 {
                return Ok(CqReport {
                    kind: CqKind::Crcq,
                    verdict: CqVerdict::Fails,
                    active: one_based(&active),
                    witness: CqWitness::RankProbe {
                        subsets: all_subsets.len(),
                        samples,
                        failure: Some(RankJump {
                            subset: one_based(s),
                            x: xs,
                            p: ps,
                            rank_at_reference: r0,
                            rank_at_sample: r,
                        }),
                    },
                });
            }
        }
    }
    Ok(CqReport {
        kind: CqKind::Crcq,
        verdict: CqVerdict::CorroboratedBySampling,
        active: one_based(&active),
        witness: CqWitness::RankProbe {
            subsets: all_subsets.len(),
            samples,
            failure: None,
        },
    })
}

/// Uniform point of the Euclidean ball of radius `r` in `R^dim`.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        if norm2 <= 1.0 && norm2 > 0.0 {
            return z.into_iter().map(|v| v * r).collect();
        }
    }
}

/// `Lambda(x,p,v) = { lambda >= 0 : sum lambda_i grad phi_i = v - f, lambda_i = 0 off I }`.
#[derive(Clone, Debug)]
pub struct MultiplierSet<T> {
    pub m: usize,
    /// Active indices (0-based).
    pub active: Vec<usize>,
    /// Active gradients, one row per active index.
    pub gradients: Vec<Vec<T>>,
    /// `v - f(x, p)`.
    pub rhs: Vec<T>,
    /// Vertices as full-length vectors in `R^m`.
    pub vertices: Vec<Vec<T>>,
    pub dimension: usize,
}

impl<T: Scalar> MultiplierSet<T> {
    pub fn to_f64(&self) -> MultiplierSet<f64> {
        let conv = |v: &Vec<T>| v.iter().map(Scalar::to_f64).collect::<Vec<f64>>();
        MultiplierSet {
            m: self.m,
            active: self.active.clone(),
            gradients: self.gradients.iter().map(conv).collect(),
            rhs: self.rhs.iter().map(Scalar::to_f64).collect(),
            vertices: self.vertices.iter().map(conv).collect(),
            dimension: self.dimension,
        }
    }
}

impl MultiplierSet<f64> {
    /// Largest violation of stationarity and nonnegativity by `lambda`.
    pub fn residual(&self, lambda: &[f64]) -> f64 {
        let n = self.rhs.len();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let s: f64 = self.active.iter().zip(&self.gradients).map(|(&i, g)| lambda[i] * g[j]).sum();
            worst = worst.max((s - self.rhs[j]).abs());
        }
        for (i, &l) in lambda.iter().enumerate() {
            worst = worst.max(-l);
            if !self.active.contains(&i) {
                worst = worst.max(l.abs());
            }
        }
        worst
    }
}

/// Column-major system `A lambda_I = rhs` with `A = [grad phi_i]_{i in I}`.
fn columns_system<T: Scalar>(grads: &[Vec<T>], cols: &[usize], n: usize) -> Rows<T> {
    (0..n).map(|j| cols.iter().map(|&k| grads[k][j].clone()).collect()).collect()
}

/// Multiplier polytope with vertices enumerated over independent column
/// bases. Errors when no multiplier exists or the set is unbounded.
pub fn multiplier_polytope<T: Scalar>(
    model: &ParametricModel,
    x: &[T],
    p: &[T],
    v: &[T],
    tau_act: f64,
) -> Result<MultiplierSet<T>> {
    let n = model.n();
    let m = model.m();
    if v.len() != n {
        return Err(Error::Dimension(format!("v has {} entries but n = {n}", v.len())));
    }
    let active = active_set(model, x, p, tau_act)?;
    if active.len() > MAX_VERTEX_ACTIVE {
        return Err(Error::TooLarge {
            what: "active constraints for vertex enumeration",
            count: active.len(),
            cap: MAX_VERTEX_ACTIVE,
        });
    }
    let all_grads = model.eval_grad_phi(x, p)?;
    let gradients: Vec<Vec<T>> = active.iter().map(|&i| all_grads[i].clone()).collect();
    let f = model.eval_f(x, p)?;
    let rhs: Vec<T> = v.iter().cloned().zip(f).map(|(a, b)| a - b).collect();
    let k = active.len();

    // Nonempty?
    let mut lp = LinearProgram::feasibility(k);
    for j in 0..n {
        lp.add_row(gradients.iter().map(|g| g[j].clone()).collect(), Sense::Eq, rhs[j].clone());
    }
    if lp.solve().optimal().is_none() {
        return Err(Error::NoMultiplier);
    }
    // Bounded? Look for mu >= 0, A mu = 0, sum mu = 1.
    if k > 0 {
        let mut rec = LinearProgram::new(vec![T::one(); k]);
        for j in 0..n {
            rec.add_row(gradients.iter().map(|g| g[j].clone()).collect(), Sense::Eq, T::zero());
        }
        rec.add_row(vec![T::one(); k], Sense::Le, T::one());
        if let Some((mu, value)) = rec.solve().optimal() {
            if value.is_positive() {
                let mut direction = vec![0.0; m];
                for (pos, &i) in active.iter().enumerate() {
                    direction[i] = mu[pos].to_f64();
                }
                return Err(Error::UnboundedMultipliers { direction });
            }
        }
    }

    let full_rank = rank(&columns_system(&gradients, &(0..k).collect::<Vec<_>>(), n));
    let mut vertices: Vec<Vec<T>> = Vec::new();
    for basis in subsets(k) {
        if basis.len() > full_rank {
            continue;
        }
        let a = columns_system(&gradients, &basis, n);
        if !basis.is_empty() && rank(&a) < basis.len() {
            continue;
        }
        let sol = if basis.is_empty() {
            rhs.iter().all(|r| r.is_negligible()).then(|| (Vec::new(), 0))
        } else {
            solve(&a, &rhs)
        };
        let Some((lam_b, _)) = sol else { continue };
        if lam_b.iter().any(|l| l.is_negative()) {
            continue;
        }
        let mut lambda = vec![T::zero(); m];
        for (pos, &kb) in basis.iter().enumerate() {
            lambda[active[kb]] = lam_b[pos].clone();
        }
        let duplicate = vertices.iter().any(|u| {
            u.iter().zip(&lambda).all(|(a, b)| {
                let diff = (a.clone() - b.clone()).abs_val();
                if T::EXACT {
                    diff.is_zero()
                } else {
                    diff.to_f64() <= 1e-8
                }
            })
        });
        if !duplicate {
            vertices.push(lambda);
        }
    }
    // Dimension of the affine hull of the vertices.
    let dimension = if vertices.len() <= 1 {
        0
    } else {
        let base = &vertices[0];
        let diffs: Vec<DVector<f64>> = vertices[1..]
            .iter()
            .map(|u| DVector::from_iterator(m, u.iter().zip(base).map(|(a, b)| a.to_f64() - b.to_f64())))
            .collect();
        numerical_rank(&diffs, m)
    };
    Ok(MultiplierSet {
        m,
        active,
        gradients,
        rhs,
        vertices,
        dimension,
    })
}

/// Exact multiplier polytope at the reference triple.
pub fn reference_multipliers(model: &ParametricModel, tau_act: f64) -> Result<MultiplierSet<Rational>> {
    let r = model.require_reference()?;
    multiplier_polytope(model, &r.x, &r.p, &r.v, tau_act)
}

/// `I_+ = { i in I : lambda_i > tau }`.
pub fn strict_complement(lambda: &[f64], active: &[usize], tau: f64) -> Vec<usize> {
    active.iter().copied().filter(|&i| lambda[i] > tau).collect()
}
