//! Sample-based monotonicity moduli of operator graphs and the localization
//! estimate for candidate inverses.

use std::io::Read;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::serfmt;

/// Pairs closer than this in `u` are skipped.
pub const DEGENERATE_PAIR: f64 = 1e-12;

/// Pairs `(u_i, v_i)` with `v_i ∈ T(u_i)`. For a localization `θ` of an
/// inverse, `u_i = θ(v_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

impl GraphSample {
    pub fn new(u: Vec<DVector<f64>>, v: Vec<DVector<f64>>) -> Result<Self> {
        if u.is_empty() || u.len() != v.len() {
            return Err(Error::InvalidArgument(format!("graph sample needs matching nonempty lists, got {} and {}", u.len(), v.len())));
        }
        let (nu, nv) = (u[0].len(), v[0].len());
        if u.iter().any(|x| x.len() != nu) || v.iter().any(|x| x.len() != nv) {
            return Err(Error::Dimension("graph sample rows have inconsistent lengths".into()));
        }
        Ok(GraphSample { u, v })
    }

    /// Samples `(x, T x)` of a map.
    pub fn of_map<F: Fn(&DVector<f64>) -> DVector<f64>>(points: &[DVector<f64>], t: F) -> Result<Self> {
        GraphSample::new(points.to_vec(), points.iter().map(t).collect())
    }

    /// Swaps the roles of `u` and `v`.
    pub fn inverse(&self) -> Self {
        GraphSample {
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Every pair lies in the ball of radius `eta` around `(center_u, center_v)`.
    pub fn within_ball(&self, center_u: &DVector<f64>, center_v: &DVector<f64>, eta: f64) -> bool {
        self.u
            .iter()
            .zip(&self.v)
            .all(|(u, v)| ((u - center_u).norm_squared() + (v - center_v).norm_squared()).sqrt() <= eta)
    }

    /// CSV with header `u1..un,v1..vn`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let nu = headers.iter().filter(|h| h.starts_with('u')).count();
        let nv = headers.iter().filter(|h| h.starts_with('v')).count();
        if nu == 0 || nv == 0 || nu + nv != headers.len() {
            return Err(Error::InvalidArgument("graph CSV needs columns u1..un followed by v1..vn".into()));
        }
        let mut u = Vec::new();
        let mut v = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            u.push(DVector::from_vec(vals[..nu].to_vec()));
            v.push(DVector::from_vec(vals[nu..].to_vec()));
        }
        GraphSample::new(u, v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityEstimate {
    /// `min <v1-v2, u1-u2> / |u1-u2|^2` over nondegenerate pairs.
    pub kappa: f64,
    /// Hypomonotonicity constant `max(0, -kappa)`.
    pub r: f64,
    /// Indices of the extreme pair.
    pub witness: (usize, usize),
    pub pairs: usize,
}

impl MonotonicityEstimate {
    pub fn monotone(&self, tau: f64) -> bool {
        self.kappa >= -tau
    }

    pub fn verdict(&self) -> String {
        format!("corroborated on {} pairs", self.pairs)
    }
}

fn pair_ratio(s: &GraphSample, i: usize, j: usize) -> Option<f64> {
    let du = &s.u[i] - &s.u[j];
    let nu2 = du.norm_squared();
    if nu2.sqrt() <= DEGENERATE_PAIR {
        return None;
    }
    Some((&s.v[i] - &s.v[j]).dot(&du) / nu2)
}

/// Order-invariant reduction: smallest value, ties broken by the pair index.
fn better(a: (f64, (usize, usize)), b: (f64, (usize, usize))) -> (f64, (usize, usize)) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub fn estimate_moduli(s: &GraphSample) -> Result<MonotonicityEstimate> {
    if s.len() < 2 {
        return Err(Error::NoSamples("need at least two graph pairs".into()));
    }
    let n = s.len();
    let (best, count) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, (usize::MAX, usize::MAX));
            let mut count = 0usize;
            for j in i + 1..n {
                if let Some(r) = pair_ratio(s, i, j) {
                    count += 1;
                    best = better(best, (r, (i, j)));
                }
            }
            (best, count)
        })
        .reduce(|| ((f64::INFINITY, (usize::MAX, usize::MAX)), 0), |a, b| (better(a.0, b.0), a.1 + b.1));
    if count == 0 {
        return Err(Error::NoSamples("all graph pairs are degenerate".into()));
    }
    Ok(MonotonicityEstimate {
        kappa: best.0,
        r: (-best.0).max(0.0),
        witness: best.1,
        pairs: count,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairViolation {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`.
    pub margin: f64,
}

/// Pairs of a localization sample (`u_i = θ(v_i)`) violating
/// `|(v1-v2) - 2κ(θ1-θ2)| <= |v1-v2| + tol`.
pub fn check_localization_estimate(s: &GraphSample, kappa: f64, tol: f64) -> Vec<PairViolation> {
    let n = s.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let dv = &s.v[i] - &s.v[j];
                let dt = &s.u[i] - &s.u[j];
                let lhs = (&dv - dt * (2.0 * kappa)).norm();
                let rhs = dv.norm();
                (lhs > rhs + tol).then_some(PairViolation {
                    i,
                    j,
                    lhs,
                    rhs,
                    margin: lhs - rhs,
                })
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InverseEstimate {
    /// `max |θ1-θ2| / |v1-v2|`.
    pub lipschitz: f64,
    /// Strong monotonicity estimate of the graph `(θ(v), v)`.
    #[serde(serialize_with = "serfmt::ext")]
    pub kappa: f64,
    /// `lipschitz <= 1/kappa + tol` (trivially true when `kappa <= 0`).
    pub consistent: bool,
}

/// Lipschitz constant of a localization and its consistency with the
/// monotonicity modulus of the inverse graph.
pub fn estimate_from_inverse(s: &GraphSample, tol: f64) -> Result<InverseEstimate> {
    let n = s.len();
    let lipschitz = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .filter_map(|j| {
                    let dv = (&s.v[i] - &s.v[j]).norm();
                    (dv > DEGENERATE_PAIR).then(|| (&s.u[i] - &s.u[j]).norm() / dv)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let kappa = match estimate_moduli(s) {
        Ok(e) => e.kappa,
        // Constant localization: every u-difference vanishes.
        Err(Error::NoSamples(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let consistent = kappa <= 0.0 || lipschitz <= 1.0 / kappa + tol;
    Ok(InverseEstimate {
        lipschitz,
        kappa,
        consistent,
    })
}
