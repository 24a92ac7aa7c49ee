//! Small dense linear-algebra helpers on top of `ndarray` / `nalgebra`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{DdmlError, Result};

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Minimum-norm least-squares solution and numerical rank.
pub struct LeastSquares {
    pub coef: Array1<f64>,
    pub rank: usize,
}

impl LeastSquares {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.coef.len()
    }
}

/// Solve `min ||b - A x||` returning the minimum-norm solution (pseudoinverse).
pub fn lstsq(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<LeastSquares> {
    let (n, p) = a.dim();
    if b.len() != n {
        return Err(DdmlError::Shape { expected: n, got: b.len() });
    }
    if p == 0 {
        return Ok(LeastSquares { coef: Array1::zeros(0), rank: 0 });
    }
    let m = to_dmatrix(a);
    let rhs = DVector::from_iterator(n, b.iter().copied());
    let svd = m.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let x = svd
        .solve(&rhs, tol)
        .map_err(|e| DdmlError::numerical(format!("svd solve failed: {e}")))?;
    Ok(LeastSquares { coef: Array1::from_iter(x.iter().copied()), rank })
}

/// Solve a small square system by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-12` times the largest entry of
/// the matrix. For a 1x1 system the result is exactly `b / a`.
pub fn solve_square(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let q = a.nrows();
    assert_eq!(a.ncols(), q);
    assert_eq!(b.len(), q);
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut m = a.to_owned();
    let mut r = b.to_owned();
    for col in 0..q {
        let piv = (col..q)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[piv, col]].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..q {
                m.swap([piv, k], [col, k]);
            }
            r.swap(piv, col);
        }
        for row in col + 1..q {
            let f = m[[row, col]] / m[[col, col]];
            if f != 0.0 {
                for k in col..q {
                    m[[row, k]] -= f * m[[col, k]];
                }
                r[row] -= f * r[col];
            }
        }
    }
    let mut x = Array1::zeros(q);
    for row in (0..q).rev() {
        let mut s = r[row];
        for k in row + 1..q {
            s -= m[[row, k]] * x[k];
        }
        x[row] = s / m[[row, row]];
    }
    Some(x)
}

/// Inverse of a small square matrix via repeated [`solve_square`].
pub fn invert_square(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let q = a.nrows();
    let mut inv = Array2::zeros((q, q));
    for j in 0..q {
        let mut e = Array1::zeros(q);
        e[j] = 1.0;
        let col = solve_square(a, e.view())?;
        inv.column_mut(j).assign(&col);
    }
    Some(inv)
}

/// Column means and population standard deviations.
pub fn column_moments(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mut mean = Array1::zeros(x.ncols());
    let mut sd = Array1::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        let m = col.sum() / n;
        let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean[j] = m;
        sd[j] = v.sqrt();
    }
    (mean, sd)
}

pub fn mean(v: ArrayView1<f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lstsq_exact_fit() {
        let a = array![[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let b = array![2.0, 4.0, 6.0];
        let ls = lstsq(a.view(), b.view()).unwrap();
        assert!((ls.coef[0]).abs() < 1e-10);
        assert!((ls.coef[1] - 2.0).abs() < 1e-10);
        assert_eq!(ls.rank, 2);
    }

    #[test]
    fn lstsq_minimum_norm_on_duplicate_columns() {
        let a = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let b = array![2.0, 4.0, 6.0];
        let ls = lstsq(a.view(), b.view()).unwrap();
        assert!(ls.rank_deficient());
        assert!((ls.coef[0] - 1.0).abs() < 1e-10);
        assert!((ls.coef[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn solve_square_scalar_is_plain_division() {
        let a = array![[3.7]];
        let b = array![1.3];
        assert_eq!(solve_square(a.view(), b.view()).unwrap()[0], 1.3 / 3.7);
        assert!(solve_square(array![[0.0]].view(), b.view()).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[1.0, 10.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
