use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{DdmlError, Result};
use crate::linalg::{column_moments, solve_square};

/// Logistic regression fitted by Newton-Raphson (IRLS).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// L2 penalty on the standardized slopes, keeps separable data finite.
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { ridge: 1e-4, max_iter: 100, tol: 1e-10 }
    }
}

pub(super) fn fit_logistic(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &LogisticParams,
) -> Result<(f64, Array1<f64>)> {
    let n = x.nrows();
    let p = x.ncols();
    let (mean, sd) = column_moments(x);
    let scale = sd.mapv(|s| if s > 1e-12 { s } else { 0.0 });
    // design with a leading intercept column
    let mut z = Array2::ones((n, p + 1));
    for i in 0..n {
        for j in 0..p {
            z[[i, j + 1]] = if scale[j] > 0.0 { (x[[i, j]] - mean[j]) / scale[j] } else { 0.0 };
        }
    }
    let ybar = y.sum() / n as f64;
    let mut beta = Array1::zeros(p + 1);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let penalty = params.ridge * n as f64;
    let mut prev = f64::INFINITY;
    for _ in 0..params.max_iter {
        let eta = z.dot(&beta);
        let mu = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.mapv(|m| (m * (1.0 - m)).max(1e-12));
        let mut grad = z.t().dot(&(&y - &mu));
        let mut hess = Array2::zeros((p + 1, p + 1));
        for i in 0..n {
            let zi = z.row(i);
            for a in 0..=p {
                let wa = w[i] * zi[a];
                for b in a..=p {
                    hess[[a, b]] += wa * zi[b];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[[a, b]] = hess[[b, a]];
            }
        }
        for j in 1..=p {
            hess[[j, j]] += penalty;
            grad[j] -= penalty * beta[j];
        }
        let step = solve_square(hess.view(), grad.view())
            .ok_or_else(|| DdmlError::numerical("logistic Hessian is singular"))?;
        beta += &step;
        let loss: f64 = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &t)| (1.0 + e.exp()).ln() - t * e)
            .sum();
        if (prev - loss).abs() < params.tol * (1.0 + loss.abs()) {
            break;
        }
        prev = loss;
    }
    let coef: Array1<f64> =
        (0..p).map(|j| if scale[j] > 0.0 { beta[j + 1] / scale[j] } else { 0.0 }).collect();
    let intercept = beta[0] - mean.dot(&coef);
    Ok((intercept, coef))
}
