//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Sized for desk-scale problems (a few dozen rows and columns). Generic over
//! [`Scalar`], so that `t* = 0` versus `t* > 0` style decisions can be made in
//! exact rational arithmetic.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `maximize c.x  subject to  rows,  x >= 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    ncols: usize,
    objective: Vec<T>,
    rows: Vec<(Vec<T>, Sense, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: Scalar> LpOutcome<T> {
    pub fn optimal(self) -> Option<(Vec<T>, T)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        LinearProgram {
            ncols: objective.len(),
            objective,
            rows: Vec::new(),
        }
    }

    /// Feasibility problem with a zero objective.
    pub fn feasibility(ncols: usize) -> Self {
        LinearProgram::new(vec![T::zero(); ncols])
    }

    pub fn add_row(&mut self, coeffs: Vec<T>, sense: Sense, rhs: T) {
        assert_eq!(coeffs.len(), self.ncols, "row length must match column count");
        self.rows.push((coeffs, sense, rhs));
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn solve(&self) -> LpOutcome<T> {
        Tableau::build(self).run(self)
    }
}

struct Tableau<T> {
    /// Constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<T>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_slack: usize,
    n_art: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let n_struct = lp.ncols;
        let n_slack = lp.rows.iter().filter(|r| r.1 != Sense::Eq).count();
        // Normalise to rhs >= 0 first to know which rows need artificials.
        let normalized: Vec<(Vec<T>, Sense, T)> = lp
            .rows
            .iter()
            .map(|(a, s, b)| {
                if *b < T::zero() {
                    let flipped = match s {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (a.iter().map(|v| -v.clone()).collect(), flipped, -b.clone())
                } else {
                    (a.clone(), *s, b.clone())
                }
            })
            .collect();
        let n_art = normalized.iter().filter(|r| r.1 != Sense::Le).count();
        let width = n_struct + n_slack + n_art + 1;
        let mut t = Vec::with_capacity(normalized.len() + 1);
        let mut basis = Vec::with_capacity(normalized.len());
        let mut slack = n_struct;
        let mut art = n_struct + n_slack;
        // Slack columns are numbered in original row order.
        let mut slack_of_row = Vec::new();
        for (_, s, _) in &lp.rows {
            if *s != Sense::Eq {
                slack_of_row.push(Some(slack));
                slack += 1;
            } else {
                slack_of_row.push(None);
            }
        }
        for (k, (a, s, b)) in normalized.iter().enumerate() {
            let mut row = vec![T::zero(); width];
            row[..n_struct].clone_from_slice(a);
            row[width - 1] = b.clone();
            match s {
                Sense::Le => {
                    let sc = slack_of_row[k].expect("inequality row has a slack");
                    row[sc] = T::one();
                    basis.push(sc);
                }
                Sense::Ge => {
                    let sc = slack_of_row[k].expect("inequality row has a slack");
                    row[sc] = -T::one();
                    row[art] = T::one();
                    basis.push(art);
                    art += 1;
                }
                Sense::Eq => {
                    row[art] = T::one();
                    basis.push(art);
                    art += 1;
                }
            }
            t.push(row);
        }
        t.push(vec![T::zero(); width]);
        Tableau {
            t,
            basis,
            n_struct,
            n_slack,
            n_art,
        }
    }

    fn width(&self) -> usize {
        self.n_struct + self.n_slack + self.n_art + 1
    }

    fn obj(&self) -> usize {
        self.t.len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let piv = self.t[r][c].clone();
        for j in 0..w {
            self.t[r][j] = self.t[r][j].clone() / piv.clone();
        }
        for i in 0..self.t.len() {
            if i == r || self.t[i][c].is_zero() {
                continue;
            }
            let factor = self.t[i][c].clone();
            for j in 0..w {
                let delta = factor.clone() * self.t[r][j].clone();
                self.t[i][j] = self.t[i][j].clone() - delta;
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex on the current objective row over columns `< limit`.
    /// Returns false when unbounded.
    fn optimize(&mut self, limit: usize) -> bool {
        let obj = self.obj();
        let rhs = self.width() - 1;
        loop {
            let entering = (0..limit).find(|&j| self.t[obj][j].is_negative());
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<usize> = None;
            for i in 0..obj {
                if !self.t[i][c].is_positive() {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let ri = self.t[i][rhs].clone() / self.t[i][c].clone();
                        let rl = self.t[l][rhs].clone() / self.t[l][c].clone();
                        let tie = (ri.clone() - rl.clone()).is_negligible();
                        if (!tie && ri < rl) || (tie && self.basis[i] < self.basis[l]) {
                            Some(i)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
            match leave {
                Some(r) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn run(mut self, lp: &LinearProgram<T>) -> LpOutcome<T> {
        let obj = self.obj();
        let w = self.width();
        let art_start = self.n_struct + self.n_slack;

        if self.n_art > 0 {
            // Phase 1: maximize -sum(artificials).
            for j in art_start..w - 1 {
                self.t[obj][j] = T::one();
            }
            for i in 0..obj {
                if self.basis[i] >= art_start {
                    for j in 0..w {
                        let delta = self.t[i][j].clone();
                        self.t[obj][j] = self.t[obj][j].clone() - delta;
                    }
                }
            }
            self.optimize(w - 1);
            if self.t[obj][w - 1].is_negative() {
                return LpOutcome::Infeasible;
            }
            // Drive remaining (zero-level) artificials out of the basis.
            let mut i = 0;
            while i < self.obj() {
                if self.basis[i] >= art_start {
                    match (0..art_start).find(|&j| !self.t[i][j].is_negligible()) {
                        Some(c) => {
                            self.pivot(i, c);
                            i += 1;
                        }
                        None => {
                            self.t.remove(i);
                            self.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }

        // Phase 2.
        let obj = self.obj();
        for j in 0..w {
            self.t[obj][j] = T::zero();
        }
        for j in 0..self.n_struct {
            self.t[obj][j] = -lp.objective[j].clone();
        }
        for i in 0..obj {
            let b = self.basis[i];
            if b < self.n_struct && !lp.objective[b].is_zero() {
                let cb = lp.objective[b].clone();
                for j in 0..w {
                    let delta = cb.clone() * self.t[i][j].clone();
                    self.t[obj][j] = self.t[obj][j].clone() + delta;
                }
            }
        }
        if !self.optimize(art_start) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![T::zero(); self.n_struct];
        for i in 0..obj {
            if self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.t[i][w - 1].clone();
            }
        }
        let value = self.t[obj][w - 1].clone();
        LpOutcome::Optimal { x, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use num_bigint::BigInt;

    fn q(a: i64, b: i64) -> Rational {
        Rational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add_row(vec![1.0, 0.0], Sense::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Sense::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Sense::Le, 18.0);
        let (x, v) = lp.solve().optimal().unwrap();
        assert!((v - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn exact_rational_equality_system() {
        // x + y = 1, x - y = 1/4 (as x - y >= 1/4 and <= 1/4), max x
        let mut lp = LinearProgram::new(vec![q(1, 1), q(0, 1)]);
        lp.add_row(vec![q(1, 1), q(1, 1)], Sense::Eq, q(1, 1));
        lp.add_row(vec![q(1, 1), q(-1, 1)], Sense::Ge, q(1, 4));
        lp.add_row(vec![q(1, 1), q(-1, 1)], Sense::Le, q(1, 4));
        let (x, v) = lp.solve().optimal().unwrap();
        assert_eq!(v, q(5, 8));
        assert_eq!(x, vec![q(5, 8), q(3, 8)]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], Sense::Le, -1.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_row(vec![1.0, -1.0], Sense::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale); Bland's rule must terminate.
        let mut lp = LinearProgram::new(vec![0.75, -20.0, 0.5, -6.0]);
        lp.add_row(vec![0.25, -8.0, -1.0, 9.0], Sense::Le, 0.0);
        lp.add_row(vec![0.5, -12.0, -0.5, 3.0], Sense::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        let (_, v) = lp.solve().optimal().unwrap();
        assert!((v - 1.25).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Sense::Eq, 2.0);
        lp.add_row(vec![2.0, 2.0], Sense::Eq, 4.0);
        let (_, v) = lp.solve().optimal().unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }
}
