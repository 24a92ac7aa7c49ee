use nalgebra::DVector;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::crossfit::make_folds;
use crate::error::{DdmlError, Result};
use crate::linalg::{column_moments, lstsq, to_dmatrix};
use crate::rng::{derive_seed, STREAM_LEARNER};

pub(super) struct LinearFit {
    pub intercept: f64,
    pub coef: Array1<f64>,
    pub rank_deficient: bool,
}

/// OLS with intercept; minimum-norm coefficients on rank deficiency.
pub(super) fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LinearFit> {
    let n = x.nrows() as f64;
    let x_mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let y_mean = y.sum() / n;
    let xc = &x - &x_mean;
    let yc = y.mapv(|v| v - y_mean);
    let ls = lstsq(xc.view(), yc.view())?;
    let intercept = y_mean - x_mean.dot(&ls.coef);
    Ok(LinearFit { intercept, rank_deficient: ls.rank_deficient(), coef: ls.coef })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeParams {
    /// Internal cross-validation folds.
    pub folds: usize,
    pub n_lambda: usize,
    /// Fixed penalty; skips cross-validation when set.
    pub lambda: Option<f64>,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams { folds: 5, n_lambda: 100, lambda: None }
    }
}

pub(super) struct RidgeFit {
    pub intercept: f64,
    pub coef: Array1<f64>,
    pub lambda: f64,
}

/// Standardized design: columns centered and scaled to unit population
/// variance; constant columns are zeroed.
struct Scaled {
    z: Array2<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
    y_mean: f64,
    yc: Array1<f64>,
}

fn scale_design(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Scaled {
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
    let y_mean = y.sum() / y.len() as f64;
    Scaled { z, mean, scale, y_mean, yc: y.mapv(|v| v - y_mean) }
}

/// Thin SVD of the standardized design, reused for every penalty.
struct RidgeSvd {
    u_t_y: DVector<f64>,
    s: DVector<f64>,
    v: nalgebra::DMatrix<f64>,
}

impl RidgeSvd {
    fn new(z: ArrayView2<f64>, yc: ArrayView1<f64>) -> Self {
        let svd = to_dmatrix(z).svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let yv = DVector::from_iterator(yc.len(), yc.iter().copied());
        RidgeSvd { u_t_y: u.transpose() * yv, s: svd.singular_values, v: v_t.transpose() }
    }

    fn coef(&self, lambda: f64) -> Array1<f64> {
        let shrunk = DVector::from_iterator(
            self.s.len(),
            self.s.iter().zip(self.u_t_y.iter()).map(|(&s, &uy)| {
                let d = s * s + lambda;
                if d > 0.0 { s * uy / d } else { 0.0 }
            }),
        );
        let b = &self.v * shrunk;
        Array1::from_iter(b.iter().copied())
    }
}

/// Ridge coefficients `(Z'Z + lambda I)^{-1} Z'y` by Cholesky, used as an
/// independent check of the SVD path.
pub fn ridge_closed_form(z: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    let zm = to_dmatrix(z);
    let mut gram = zm.transpose() * &zm;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = zm.transpose() * DVector::from_iterator(y.len(), y.iter().copied());
    let chol = gram
        .cholesky()
        .ok_or_else(|| DdmlError::numerical("ridge normal equations not positive definite"))?;
    Ok(Array1::from_iter(chol.solve(&rhs).iter().copied()))
}

fn lambda_grid(s_max: f64, n_lambda: usize) -> Vec<f64> {
    let top = (s_max * s_max).max(1e-12) * 1e3;
    let bottom = (s_max * s_max).max(1e-12) * 1e-6;
    let n = n_lambda.max(2);
    (0..n)
        .map(|i| top * (bottom / top).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub(super) fn fit_ridge_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &RidgeParams,
    seed: u64,
) -> Result<RidgeFit> {
    let n = x.nrows();
    let full = scale_design(x, y);
    let full_svd = RidgeSvd::new(full.z.view(), full.yc.view());
    let lambda = match params.lambda {
        Some(l) if l >= 0.0 => l,
        Some(l) => return Err(DdmlError::config(format!("ridge penalty must be non-negative, got {l}"))),
        None => {
            if n < params.folds || params.folds < 2 {
                return Err(DdmlError::config(format!(
                    "ridge_cv needs at least {} rows, got {n}",
                    params.folds.max(2)
                )));
            }
            let s_max = full_svd.s.iter().cloned().fold(0.0, f64::max);
            let grid = lambda_grid(s_max, params.n_lambda);
            let folds = make_folds(n, params.folds, derive_seed(seed, STREAM_LEARNER))?;
            let mut cv_sse = vec![0.0; grid.len()];
            for k in 0..params.folds {
                let (train, test) = folds.split(k);
                let xt = x.select(Axis(0), &train);
                let yt = y.select(Axis(0), &train);
                let s = scale_design(xt.view(), yt.view());
                let svd = RidgeSvd::new(s.z.view(), s.yc.view());
                let xv = x.select(Axis(0), &test);
                let yv = y.select(Axis(0), &test);
                for (g, &lam) in grid.iter().enumerate() {
                    let (b0, b) = unscale(&s, &svd.coef(lam));
                    let pred = xv.dot(&b) + b0;
                    cv_sse[g] += pred.iter().zip(yv.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
                }
            }
            let best = (0..grid.len()).fold(0, |b, g| if cv_sse[g] < cv_sse[b] { g } else { b });
            grid[best]
        }
    };
    let (intercept, coef) = unscale(&full, &full_svd.coef(lambda));
    Ok(RidgeFit { intercept, coef, lambda })
}

/// Map standardized coefficients back to the raw design.
fn unscale(s: &Scaled, beta: &Array1<f64>) -> (f64, Array1<f64>) {
    let coef: Array1<f64> = beta
        .iter()
        .zip(s.scale.iter())
        .map(|(&b, &sc)| if sc > 0.0 { b / sc } else { 0.0 })
        .collect();
    (s.y_mean - s.mean.dot(&coef), coef)
}
