//! Structural-parameter estimators from cross-fitted nuisances.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::crossfit::FoldAssignment;
use crate::error::{DdmlError, Result};
use crate::linalg::{invert_square, median, solve_square};
use crate::stacking::{FinalLearner, StackingMode};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959964;

/// Propensity clipping bound for the ATET score.
pub const PROPENSITY_EPS: f64 = 1e-6;

/// How a nuisance estimate was produced, echoed into reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stacking: Option<StackingMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_learner: Option<FinalLearner>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learner: Option<String>,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<usize>,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n: usize,
    pub meta: EstimateMeta,
    /// Propensities clipped into `[eps, 1 - eps]` (ATET only).
    #[serde(default)]
    pub clipped: usize,
}

impl PointEstimate {
    pub fn new(theta: Vec<f64>, se: Vec<f64>, n: usize) -> Self {
        let ci_low = theta.iter().zip(&se).map(|(t, s)| t - Z_95 * s).collect();
        let ci_high = theta.iter().zip(&se).map(|(t, s)| t + Z_95 * s).collect();
        PointEstimate { theta, se, ci_low, ci_high, n, meta: EstimateMeta::default(), clipped: 0 }
    }

    pub fn with_meta(mut self, meta: EstimateMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Whether the 95% interval of component `j` contains `value`.
    pub fn covers(&self, j: usize, value: f64) -> bool {
        self.ci_low[j] <= value && value <= self.ci_high[j]
    }
}

/// Cross-fitted nuisance predictions.
#[derive(Debug, Clone)]
pub struct NuisanceEstimates {
    /// `E[Y|X]` (partially linear model).
    pub ell_hat: Option<Array1<f64>>,
    /// `n x q`, `E[D_j|X]`.
    pub m_hat: Array2<f64>,
    /// `E[Y|D=0,X]` (ATET).
    pub g0_hat: Option<Array1<f64>>,
    /// Per-row `P(D=1)` estimated on the row's training folds (ATET).
    pub p_hat: Option<Array1<f64>>,
}

impl NuisanceEstimates {
    pub fn plm(ell_hat: Array1<f64>, m_hat: Array2<f64>) -> Self {
        NuisanceEstimates { ell_hat: Some(ell_hat), m_hat, g0_hat: None, p_hat: None }
    }

    pub fn atet(g0_hat: Array1<f64>, m_hat: Array1<f64>, p_hat: Array1<f64>) -> Self {
        let n = m_hat.len();
        NuisanceEstimates {
            ell_hat: None,
            m_hat: m_hat.into_shape_with_order((n, 1)).expect("column vector"),
            g0_hat: Some(g0_hat),
            p_hat: Some(p_hat),
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(DdmlError::Shape { expected, got });
    }
    Ok(())
}

/// Scalar-treatment PLM estimator with HC0 standard error.
pub fn plm_estimate_scalar(y: ArrayView1<f64>, d: ArrayView1<f64>, ell_hat: ArrayView1<f64>, m_hat: ArrayView1<f64>) -> Result<PointEstimate> {
    let n = y.len();
    check_len(n, d.len())?;
    check_len(n, ell_hat.len())?;
    check_len(n, m_hat.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let dt = d[i] - m_hat[i];
        num += (y[i] - ell_hat[i]) * dt;
        den += dt * dt;
    }
    if den == 0.0 {
        return Err(degenerate());
    }
    let theta = num / den;
    let mut meat = 0.0;
    for i in 0..n {
        let dt = d[i] - m_hat[i];
        let u = (y[i] - ell_hat[i]) - dt * theta;
        meat += u * u * dt * dt;
    }
    let inv = 1.0 / den;
    let var = inv * meat * inv;
    Ok(PointEstimate::new(vec![theta], vec![var.sqrt()], n))
}

fn degenerate() -> DdmlError {
    DdmlError::numerical("degenerate denominator: treatment residuals D - m_hat have no variation (m_hat reproduces D)")
}

/// PLM estimator `(D~'D~)^{-1} D~'Y~` with HC0 sandwich standard errors.
pub fn plm_estimate(y: ArrayView1<f64>, d: ArrayView2<f64>, nuis: &NuisanceEstimates) -> Result<PointEstimate> {
    let n = y.len();
    let q = d.ncols();
    let ell = nuis.ell_hat.as_ref().ok_or_else(|| DdmlError::Contract("PLM needs ell_hat".into()))?;
    check_len(n, d.nrows())?;
    check_len(n, ell.len())?;
    if nuis.m_hat.dim() != (n, q) {
        return Err(DdmlError::Shape { expected: n * q, got: nuis.m_hat.len() });
    }
    let mut a = Array2::<f64>::zeros((q, q));
    let mut b = Array1::<f64>::zeros(q);
    let mut dt = vec![0.0; q];
    for i in 0..n {
        let yt = y[i] - ell[i];
        for j in 0..q {
            dt[j] = d[[i, j]] - nuis.m_hat[[i, j]];
        }
        for j in 0..q {
            b[j] += yt * dt[j];
            for l in 0..q {
                a[[j, l]] += dt[j] * dt[l];
            }
        }
    }
    if (0..q).any(|j| a[[j, j]] == 0.0) {
        return Err(degenerate());
    }
    let theta = solve_square(a.view(), b.view()).ok_or_else(|| {
        DdmlError::numerical("degenerate denominator: treatment residuals are collinear")
    })?;
    let bread = invert_square(a.view()).ok_or_else(degenerate)?;
    let mut meat = Array2::<f64>::zeros((q, q));
    for i in 0..n {
        let mut u = y[i] - ell[i];
        for j in 0..q {
            dt[j] = d[[i, j]] - nuis.m_hat[[i, j]];
            u -= dt[j] * theta[j];
        }
        for j in 0..q {
            for l in 0..q {
                meat[[j, l]] += u * u * dt[j] * dt[l];
            }
        }
    }
    let cov = if q == 1 {
        let inv = 1.0 / a[[0, 0]];
        Array2::from_elem((1, 1), inv * meat[[0, 0]] * inv)
    } else {
        bread.dot(&meat).dot(&bread)
    };
    let se = (0..q).map(|j| cov[[j, j]].max(0.0).sqrt()).collect();
    Ok(PointEstimate::new(theta.to_vec(), se, n))
}

/// Treated share of each row's training folds.
///
/// Fails when some fold's training set lacks treated or control rows.
pub fn fold_treated_share(d: ArrayView1<f64>, folds: &FoldAssignment) -> Result<Array1<f64>> {
    check_len(folds.n, d.len())?;
    let total_treated: f64 = d.sum();
    let mut share = vec![0.0; folds.k];
    let sizes = folds.sizes();
    for (k, s) in share.iter_mut().enumerate() {
        let treated_in_k: f64 = folds.members(k).iter().map(|&i| d[i]).sum();
        let train_n = (folds.n - sizes[k]) as f64;
        let treated = total_treated - treated_in_k;
        if treated <= 0.0 || treated >= train_n {
            return Err(DdmlError::data(format!(
                "fold {}: training set has no {} rows; use stratified folds",
                k + 1,
                if treated <= 0.0 { "treated" } else { "control" }
            )));
        }
        *s = treated / train_n;
    }
    Ok(folds.fold_of.iter().map(|&k| share[k]).collect())
}

/// Standard-error formula for the ATET score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtetVariance {
    /// Standard deviation of the centred efficient influence function
    /// `s_i - theta D_i / p_i`.
    #[default]
    Influence,
    /// Standard deviation of the score summands `s_i` themselves.
    Summand,
}

#[derive(Debug, Clone)]
pub struct AtetEstimate {
    pub estimate: PointEstimate,
    /// Per-observation score summands; their mean is `theta`.
    pub summands: Array1<f64>,
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// ATET from the efficient score with fold-local `p_hat`.
pub fn atet_estimate(y: ArrayView1<f64>, d: ArrayView1<f64>, nuis: &NuisanceEstimates, variance: AtetVariance) -> Result<AtetEstimate> {
    let n = y.len();
    check_len(n, d.len())?;
    if d.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(DdmlError::config("treatment not binary"));
    }
    let g0 = nuis.g0_hat.as_ref().ok_or_else(|| DdmlError::Contract("ATET needs g0_hat".into()))?;
    let p = nuis.p_hat.as_ref().ok_or_else(|| DdmlError::Contract("ATET needs p_hat".into()))?;
    check_len(n, g0.len())?;
    check_len(n, p.len())?;
    check_len(n, nuis.m_hat.nrows())?;
    let mut clipped = 0;
    let mut summands = Array1::zeros(n);
    for i in 0..n {
        let raw = nuis.m_hat[[i, 0]];
        let m = raw.clamp(PROPENSITY_EPS, 1.0 - PROPENSITY_EPS);
        if m != raw {
            clipped += 1;
        }
        let resid = y[i] - g0[i];
        summands[i] = d[i] * resid / p[i] - m * (1.0 - d[i]) * resid / (p[i] * (1.0 - m));
    }
    let theta = summands.sum() / n as f64;
    let spread: Vec<f64> = match variance {
        AtetVariance::Influence => (0..n).map(|i| summands[i] - theta * d[i] / p[i]).collect(),
        AtetVariance::Summand => summands.to_vec(),
    };
    let se = if n > 1 { sample_sd(&spread) / (n as f64).sqrt() } else { 0.0 };
    let mut estimate = PointEstimate::new(vec![theta], vec![se], n);
    estimate.clipped = clipped;
    Ok(AtetEstimate { estimate, summands })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

/// Combine repetition estimates; the standard error adds the dispersion of
/// each repetition around the aggregate.
pub fn aggregate_repetitions(estimates: &[PointEstimate], how: Aggregation) -> Result<PointEstimate> {
    let first = estimates.first().ok_or_else(|| DdmlError::config("no repetitions to aggregate"))?;
    if estimates.len() == 1 {
        return Ok(first.clone());
    }
    let q = first.theta.len();
    if estimates.iter().any(|e| e.theta.len() != q) {
        return Err(DdmlError::Shape { expected: q, got: estimates.iter().map(|e| e.theta.len()).find(|&l| l != q).unwrap_or(q) });
    }
    let center = |v: &[f64]| match how {
        Aggregation::Median => median(v),
        Aggregation::Mean => v.iter().sum::<f64>() / v.len() as f64,
    };
    let mut theta = Vec::with_capacity(q);
    let mut se = Vec::with_capacity(q);
    for j in 0..q {
        let ts: Vec<f64> = estimates.iter().map(|e| e.theta[j]).collect();
        let t = center(&ts);
        let adjusted: Vec<f64> = estimates.iter().map(|e| (e.se[j] * e.se[j] + (e.theta[j] - t).powi(2)).sqrt()).collect();
        theta.push(t);
        se.push(center(&adjusted));
    }
    let mut out = PointEstimate::new(theta, se, first.n);
    out.meta = first.meta.clone();
    out.meta.r = estimates.len();
    out.clipped = estimates.iter().map(|e| e.clipped).sum();
    Ok(out)
}

/// Per-repetition estimates and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSet {
    pub aggregation: Aggregation,
    pub repetitions: Vec<PointEstimate>,
    pub aggregate: PointEstimate,
}

impl RepetitionSet {
    pub fn new(repetitions: Vec<PointEstimate>, aggregation: Aggregation) -> Result<Self> {
        let aggregate = aggregate_repetitions(&repetitions, aggregation)?;
        Ok(RepetitionSet { aggregation, repetitions, aggregate })
    }
}
