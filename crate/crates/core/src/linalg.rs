//! Dense linear algebra helpers.
//!
//! Gaussian elimination is generic over [`Scalar`] so that rank and
//! determinant decisions at rational reference data are exact. Spectral work
//! (eigenvalues, orthonormal bases) goes through `nalgebra` in `f64`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::scalar::Scalar;

/// Row-major dense matrix over any [`Scalar`].
pub type Rows<T> = Vec<Vec<T>>;

/// Reduced row echelon form; returns the pivot columns.
pub fn rref<T: Scalar>(a: &mut Rows<T>) -> Vec<usize> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        // Partial pivoting on magnitude (harmless for exact arithmetic).
        let mut best = r;
        for i in r + 1..rows {
            if a[i][c].abs_val() > a[best][c].abs_val() {
                best = i;
            }
        }
        if a[best][c].is_negligible() {
            for row in a.iter_mut().skip(r) {
                row[c] = T::zero();
            }
            continue;
        }
        a.swap(r, best);
        let piv = a[r][c].clone();
        for j in c..cols {
            a[r][j] = a[r][j].clone() / piv.clone();
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let factor = a[i][c].clone();
                for j in c..cols {
                    let delta = factor.clone() * a[r][j].clone();
                    a[i][j] = a[i][j].clone() - delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<T: Scalar>(a: &Rows<T>) -> usize {
    let mut work = a.clone();
    rref(&mut work).len()
}

/// Solves `A y = b`. Returns `None` when the system is inconsistent; free
/// variables are set to zero. Also returns the rank of `A`.
pub fn solve<T: Scalar>(a: &Rows<T>, b: &[T]) -> Option<(Vec<T>, usize)> {
    let cols = a.first().map_or(0, Vec::len);
    let mut aug: Rows<T> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.last() == Some(&cols) {
        return None;
    }
    let mut y = vec![T::zero(); cols];
    for (r, &c) in pivots.iter().enumerate() {
        y[c] = aug[r][cols].clone();
    }
    Some((y, pivots.len()))
}

/// Determinant by elimination with partial pivoting.
pub fn determinant<T: Scalar>(a: &Rows<T>) -> T {
    let n = a.len();
    let mut m = a.clone();
    let mut det = T::one();
    for c in 0..n {
        let mut best = c;
        for i in c + 1..n {
            if m[i][c].abs_val() > m[best][c].abs_val() {
                best = i;
            }
        }
        if m[best][c].is_zero() {
            return T::zero();
        }
        if best != c {
            m.swap(best, c);
            det = -det;
        }
        let piv = m[c][c].clone();
        det = det * piv.clone();
        for i in c + 1..n {
            if m[i][c].is_zero() {
                continue;
            }
            let factor = m[i][c].clone() / piv.clone();
            for j in c..n {
                let delta = factor.clone() * m[c][j].clone();
                m[i][j] = m[i][j].clone() - delta;
            }
        }
    }
    det
}

pub fn to_f64_rows<T: Scalar>(a: &Rows<T>) -> Rows<f64> {
    a.iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn symmetric_part(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix sorted by ascending eigenvalue.
pub fn sorted_eigen(s: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    if s.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(s.clone());
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lam)| (lam, eig.eigenvectors.column(k).into_owned()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    sorted_eigen(s).into_iter().next()
}

/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;
const RANK_ABS_TOL: f64 = 1e-12;

/// Orthonormal basis (as columns) of the span of the given column vectors.
pub fn orthonormal_span(cols: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let a = DMatrix::from_columns(cols);
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let largest = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = (RANK_REL_TOL * largest).max(RANK_ABS_TOL);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let kept: Vec<DVector<f64>> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] > cutoff)
        .map(|k| u.column(k).into_owned())
        .collect();
    if kept.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

/// Orthonormal basis of `{ w : a_i . w = 0 for every row a_i }`.
pub fn null_space(rows: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let range = orthonormal_span(rows, n);
    orthogonal_complement(&range, n)
}

/// Orthonormal basis of the orthogonal complement of `span(V)` (V orthonormal).
pub fn orthogonal_complement(v: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if v.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    if v.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let proj = DMatrix::identity(n, n) - v * v.transpose();
    let kept: Vec<DVector<f64>> = sorted_eigen(&proj)
        .into_iter()
        .rev()
        .filter(|(lam, _)| *lam > 0.5)
        .map(|(_, w)| w)
        .collect();
    if kept.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

/// Numerical rank with threshold `RANK_REL_TOL * sigma_max`.
pub fn numerical_rank(rows: &[DVector<f64>], n: usize) -> usize {
    orthonormal_span(rows, n).ncols()
}

/// Singular values of the matrix whose rows are given, descending.
pub fn singular_values(rows: &[DVector<f64>], n: usize) -> Vec<f64> {
    if rows.is_empty() {
        return Vec::new();
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Subsets of `0..len` in increasing bitmask order.
pub fn subsets(len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u64..(1u64 << len)).map(move |mask| (0..len).filter(|i| mask & (1 << i) != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use num_bigint::BigInt;

    fn q(a: i64) -> Rational {
        Rational::from_integer(BigInt::from(a))
    }

    #[test]
    fn exact_rank_and_determinant() {
        let a = vec![vec![q(1), q(0), q(-1)], vec![q(-1), q(0), q(-1)], vec![q(0), q(1), q(-1)], vec![q(0), q(-1), q(-1)]];
        assert_eq!(rank(&a), 3);
        let m = vec![vec![q(2), q(1)], vec![q(4), q(2)]];
        assert_eq!(determinant(&m), q(0));
        let m = vec![vec![q(0), q(1)], vec![q(1), q(0)]];
        assert_eq!(determinant(&m), q(-1));
    }

    #[test]
    fn solve_detects_inconsistency() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(solve(&a, &[1.0, 3.0]).is_none());
        let (y, r) = solve(&a, &[1.0, 2.0]).unwrap();
        assert_eq!(r, 1);
        assert!((y[0] + y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let rows = vec![DVector::from_vec(vec![1.0, 0.0, -1.0]), DVector::from_vec(vec![-1.0, 0.0, -1.0])];
        let v = null_space(&rows, 3);
        assert_eq!(v.ncols(), 1);
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-12);
        let id = v.transpose() * &v;
        assert!((id[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn subsets_enumerates_power_set() {
        let all: Vec<Vec<usize>> = subsets(3).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], Vec::<usize>::new());
        assert_eq!(all[7], vec![0, 1, 2]);
    }
}
