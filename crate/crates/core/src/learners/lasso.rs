//! Lasso by cyclic coordinate descent with covariance updates, warm-started
//! down a log-spaced penalty path, with the penalty picked by internal
//! cross-validation.
//!
//! The objective on a standardized design `Z` (unit population variance,
//! centered response) is
//!
//! ```text
//! (1 / 2n) ||y - Z b||^2 + lambda * ||b||_1
//! ```
//!
//! so a coefficient is zero exactly when `|z_j' r / n| <= lambda`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::crossfit::make_folds;
use crate::error::{DdmlError, Result};
use crate::linalg::column_moments;
use crate::rng::{derive_seed, STREAM_LEARNER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub folds: usize,
    pub n_lambda: usize,
    /// Smallest penalty on the path as a fraction of `lambda_max`.
    pub lambda_min_ratio: f64,
    /// Convergence: largest coefficient change in one sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Fixed penalty; skips cross-validation when set.
    pub lambda: Option<f64>,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            folds: 5,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            tol: 1e-7,
            max_sweeps: 10_000,
            lambda: None,
        }
    }
}

/// Sufficient statistics of a standardized design.
pub struct StandardizedDesign {
    /// `Z'Z / n`
    pub gram: Array2<f64>,
    /// `Z'y / n` with `y` centered
    pub zty: Array1<f64>,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub y_mean: f64,
}

impl StandardizedDesign {
    pub fn new(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Self {
        let n = x.nrows() as f64;
        let (mean, sd) = column_moments(x);
        let scale = sd.mapv(|s| if s > 1e-12 { s } else { 0.0 });
        let mut z = &x - &mean;
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            if scale[j] > 0.0 {
                col.mapv_inplace(|v| v / scale[j]);
            } else {
                col.fill(0.0);
            }
        }
        let y_mean = y.sum() / n;
        let yc = y.mapv(|v| v - y_mean);
        let gram = z.t().dot(&z) / n;
        let zty = z.t().dot(&yc) / n;
        StandardizedDesign { gram, zty, mean, scale, y_mean }
    }

    /// Smallest penalty at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        self.zty.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn unscale(&self, beta: &Array1<f64>) -> (f64, Array1<f64>) {
        let coef: Array1<f64> = beta
            .iter()
            .zip(self.scale.iter())
            .map(|(&b, &s)| if s > 0.0 { b / s } else { 0.0 })
            .collect();
        (self.y_mean - self.mean.dot(&coef), coef)
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent at one penalty, warm-started from `beta`.
///
/// Full sweeps alternate with sweeps over the nonzero coefficients only;
/// the solve ends when a full sweep moves no coefficient by `tol` or more.
/// Returns the number of sweeps used.
pub fn lasso_coordinate_descent(
    gram: &Array2<f64>,
    zty: &Array1<f64>,
    lambda: f64,
    beta: &mut Array1<f64>,
    tol: f64,
    max_sweeps: usize,
) -> usize {
    let p = zty.len();
    // q = G beta
    let mut q = gram.dot(&*beta);
    let update = |j: usize, beta: &mut Array1<f64>, q: &mut Array1<f64>| -> f64 {
        let gjj = gram[[j, j]];
        if gjj <= 0.0 {
            return 0.0;
        }
        let old = beta[j];
        let z = zty[j] - q[j] + gjj * old;
        let delta = soft_threshold(z, lambda) / gjj - old;
        if delta != 0.0 {
            beta[j] = old + delta;
            q.scaled_add(delta, &gram.column(j));
        }
        delta.abs()
    };
    let mut sweeps = 0;
    let mut active = Vec::with_capacity(p);
    while sweeps < max_sweeps {
        sweeps += 1;
        let full = (0..p).fold(0.0_f64, |m, j| m.max(update(j, beta, &mut q)));
        if full < tol {
            return sweeps;
        }
        active.clear();
        active.extend((0..p).filter(|&j| beta[j] != 0.0));
        while sweeps < max_sweeps {
            sweeps += 1;
            let inner = active.iter().fold(0.0_f64, |m, &j| m.max(update(j, beta, &mut q)));
            if inner < tol {
                break;
            }
        }
    }
    max_sweeps
}

/// In-sample R^2 of standardized coefficients.
fn r_squared(design: &StandardizedDesign, beta: &Array1<f64>, tss: f64) -> f64 {
    if tss <= 0.0 {
        return 1.0;
    }
    let rss = tss - 2.0 * beta.dot(&design.zty) + beta.dot(&design.gram.dot(beta));
    1.0 - rss / tss
}

/// Leading part of `path` worth fitting: stops once the in-sample R^2 gains
/// less than `1e-5` between penalties or exceeds `0.999`.
fn truncate_path(design: &StandardizedDesign, tss: f64, path: &[f64], params: &LassoParams) -> usize {
    let mut beta = Array1::zeros(design.zty.len());
    let mut prev = 0.0;
    for (g, &lam) in path.iter().enumerate() {
        lasso_coordinate_descent(&design.gram, &design.zty, lam, &mut beta, params.tol, params.max_sweeps);
        let r2 = r_squared(design, &beta, tss);
        if g > 0 && (r2 - prev < 1e-5 || r2 > 0.999) {
            return g + 1;
        }
        prev = r2;
    }
    path.len()
}

fn lambda_path(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lambda_max * ratio.powf(i as f64 / (n - 1) as f64)).collect()
}

pub(super) struct LassoFit {
    pub intercept: f64,
    pub coef: Array1<f64>,
    pub lambda: f64,
}

pub(super) fn fit_lasso_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &LassoParams,
    seed: u64,
) -> Result<LassoFit> {
    let n = x.nrows();
    let p = x.ncols();
    let full = StandardizedDesign::new(x, y);
    let lmax = full.lambda_max();
    let mut path = lambda_path(lmax, params.n_lambda, params.lambda_min_ratio);

    let lambda = match params.lambda {
        Some(l) if l >= 0.0 => l,
        Some(l) => return Err(DdmlError::config(format!("lasso penalty must be non-negative, got {l}"))),
        None => {
            if n < params.folds || params.folds < 2 {
                return Err(DdmlError::config(format!(
                    "lasso_cv needs at least {} rows, got {n}",
                    params.folds.max(2)
                )));
            }
            // the grid is fixed from the full training data so every fold
            // scores the same penalties
            let y_mean = y.sum() / n as f64;
            let tss = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
            path.truncate(truncate_path(&full, tss, &path, params));
            let folds = make_folds(n, params.folds, derive_seed(seed, STREAM_LEARNER))?;
            let mut cv_sse = vec![0.0; path.len()];
            for k in 0..params.folds {
                let (train, test) = folds.split(k);
                let xt = x.select(Axis(0), &train);
                let yt = y.select(Axis(0), &train);
                let design = StandardizedDesign::new(xt.view(), yt.view());
                let xv = x.select(Axis(0), &test);
                let yv = y.select(Axis(0), &test);
                let mut beta = Array1::zeros(p);
                for (g, &lam) in path.iter().enumerate() {
                    lasso_coordinate_descent(&design.gram, &design.zty, lam, &mut beta, params.tol, params.max_sweeps);
                    let (b0, b) = design.unscale(&beta);
                    let pred = xv.dot(&b) + b0;
                    cv_sse[g] += pred.iter().zip(yv.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
                }
            }
            let best = (0..path.len()).fold(0, |b, g| if cv_sse[g] < cv_sse[b] { g } else { b });
            path[best]
        }
    };

    let mut beta = Array1::zeros(p);
    for &lam in path.iter().take_while(|&&l| l > lambda) {
        lasso_coordinate_descent(&full.gram, &full.zty, lam, &mut beta, params.tol, params.max_sweeps);
    }
    lasso_coordinate_descent(&full.gram, &full.zty, lambda, &mut beta, params.tol, params.max_sweeps);
    let (intercept, coef) = full.unscale(&beta);
    Ok(LassoFit { intercept, coef, lambda })
}
