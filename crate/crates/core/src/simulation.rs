//! Data-generating processes and the Monte Carlo driver.
//!
//! Three families are provided:
//!
//! * toy partially linear models with Gaussian AR(1)-correlated covariates
//!   and a linear or non-linear nuisance `g`;
//! * a calibrated process fitted to a real sample (linear regression or
//!   gradient boosting for the reduced forms) that bootstraps covariates
//!   and draws a binary treatment;
//! * plain bootstrap subsamples of a real sample, with bias measured
//!   against a full-sample reference estimate.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::data::Dataset;
use crate::error::{DdmlError, Result};
use crate::learners::{bind_truths, BoostingParams, FittedLearner, LearnerKind, LearnerSpec, TruthFn};
use crate::linalg::{lstsq, median};
use crate::pipeline::{run_ddml, DdmlConfig, DdmlResult, NuisanceLearners, Timings};
use crate::rng::{derive_path, derive_seed, rng_from, STREAM_SIMULATION};
use crate::stacking::{FinalLearner, StackingMode};

/// Which term the duplicated index `X5 X5` of the non-linear nuisance
/// stands for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicateTerm {
    /// `X4 X5`.
    #[default]
    X4x5,
    /// `X5^2`, the printed term taken literally.
    X5x5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Linear,
    Nonlinear,
}

/// Toy partially linear model
/// `Y = theta0 D + c_Y g(X) + eps`, `D = c_D g(X) + u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub kind: ToyKind,
    #[serde(default = "default_toy_theta")]
    pub theta0: f64,
    /// Covariate count; defaults to 12 (linear) or 13 (non-linear).
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Fixed scaling constants; calibrated when absent.
    #[serde(default)]
    pub c_y: Option<f64>,
    #[serde(default)]
    pub c_d: Option<f64>,
    /// Population R^2 targeted for both `Y` and `D` on `X`.
    #[serde(default = "default_r2")]
    pub r2_target: f64,
    #[serde(default)]
    pub duplicate_term: DuplicateTerm,
}

fn default_toy_theta() -> f64 {
    0.5
}
fn default_rho() -> f64 {
    0.5
}
fn default_r2() -> f64 {
    0.5
}

impl ToySpec {
    pub fn new(kind: ToyKind) -> Self {
        ToySpec {
            kind,
            theta0: default_toy_theta(),
            p: None,
            rho: default_rho(),
            c_y: None,
            c_d: None,
            r2_target: default_r2(),
            duplicate_term: DuplicateTerm::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.p.unwrap_or(match self.kind {
            ToyKind::Linear => 12,
            ToyKind::Nonlinear => 13,
        })
    }
}

/// Linear nuisance `sum_j 0.9^j X_j` (j from 1).
pub fn g_linear(x: ArrayView1<f64>) -> f64 {
    x.iter().enumerate().map(|(j, v)| 0.9f64.powi(j as i32 + 1) * v).sum()
}

/// Non-linear nuisance
/// `X1X2 + X3^2 + X4X5 + X6X7 + X8X9 + X10 + X11^2 + X12X13`.
pub fn g_nonlinear(x: ArrayView1<f64>, dup: DuplicateTerm) -> f64 {
    let third = match dup {
        DuplicateTerm::X4x5 => x[3] * x[4],
        DuplicateTerm::X5x5 => x[4] * x[4],
    };
    x[0] * x[1] + x[2] * x[2] + third + x[5] * x[6] + x[7] * x[8] + x[9] + x[10] * x[10] + x[11] * x[12]
}

/// Draw `n` rows of `N(0, Sigma)` with `Sigma_jk = rho^|j-k|`.
pub fn ar1_covariates<R: Rng>(n: usize, p: usize, rho: f64, rng: &mut R) -> Array2<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            x[[i, j]] = if j == 0 { z } else { rho * x[[i, j - 1]] + s * z };
        }
    }
    x
}

/// Toy process with resolved constants.
#[derive(Clone)]
pub struct ToyDgp {
    pub spec: ToySpec,
    pub c_y: f64,
    pub c_d: f64,
    g: Arc<dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ToyDgp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyDgp").field("spec", &self.spec).field("c_y", &self.c_y).field("c_d", &self.c_d).finish()
    }
}

/// Draws used to calibrate the toy scaling constants.
pub const CALIBRATION_DRAWS: usize = 50_000;

fn sample_r2(signal: &[f64], noise: &[f64]) -> f64 {
    let var = |v: &mut dyn Iterator<Item = f64>| {
        let vals: Vec<f64> = v.collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64
    };
    let vs = var(&mut signal.iter().copied());
    let vt = var(&mut signal.iter().zip(noise).map(|(a, b)| a + b));
    if vt > 0.0 { vs / vt } else { 0.0 }
}

/// Smallest `c >= 0` with `r2(c) >= target` by bisection; `r2` must be
/// increasing.
fn bisect(target: f64, r2: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while r2(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r2(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl ToyDgp {
    /// Resolve the scaling constants: `c_D` so that the R^2 of `D` on `X`
    /// hits the target, then `c_Y` so that the R^2 of `Y` on `X` does,
    /// both on a fixed pre-simulation.
    pub fn new(spec: ToySpec) -> Result<Self> {
        let p = spec.dim();
        if spec.kind == ToyKind::Nonlinear && p < 13 {
            return Err(DdmlError::config(format!("non-linear toy process needs p >= 13, got {p}")));
        }
        if !(0.0..1.0).contains(&spec.r2_target) || spec.rho.abs() >= 1.0 {
            return Err(DdmlError::config("toy process needs 0 <= r2_target < 1 and |rho| < 1"));
        }
        let dup = spec.duplicate_term;
        let g: Arc<dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync> = match spec.kind {
            ToyKind::Linear => Arc::new(g_linear),
            ToyKind::Nonlinear => Arc::new(move |x| g_nonlinear(x, dup)),
        };
        let (c_y, c_d) = match (spec.c_y, spec.c_d) {
            (Some(cy), Some(cd)) => (cy, cd),
            _ => {
                let mut rng = rng_from(derive_seed(0xCA11_B8A7, p as u64));
                let x = ar1_covariates(CALIBRATION_DRAWS, p, spec.rho, &mut rng);
                let gx: Vec<f64> = x.rows().into_iter().map(|r| g(r)).collect();
                let u: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| StandardNormal.sample(&mut rng)).collect();
                let e: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| StandardNormal.sample(&mut rng)).collect();
                let t = spec.r2_target;
                let c_d = spec.c_d.unwrap_or_else(|| {
                    bisect(t, |c| sample_r2(&gx.iter().map(|v| c * v).collect::<Vec<_>>(), &u))
                });
                let noise_y: Vec<f64> = u.iter().zip(&e).map(|(a, b)| spec.theta0 * a + b).collect();
                let c_y = spec.c_y.unwrap_or_else(|| {
                    bisect(t, |c| {
                        let a = spec.theta0 * c_d + c;
                        sample_r2(&gx.iter().map(|v| a * v).collect::<Vec<_>>(), &noise_y)
                    })
                });
                (c_y, c_d)
            }
        };
        Ok(ToyDgp { spec, c_y, c_d, g })
    }

    pub fn g(&self, x: ArrayView1<f64>) -> f64 {
        (self.g)(x)
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from(seed);
        let p = self.spec.dim();
        let x = ar1_covariates(n, p, self.spec.rho, &mut rng);
        let mut y = Array1::zeros(n);
        let mut d = Array2::zeros((n, 1));
        for i in 0..n {
            let g = self.g(x.row(i));
            let e: f64 = StandardNormal.sample(&mut rng);
            let u: f64 = StandardNormal.sample(&mut rng);
            d[[i, 0]] = self.c_d * g + u;
            y[i] = self.spec.theta0 * d[[i, 0]] + self.c_y * g + e;
        }
        Dataset::new(y, d, x)
    }

    /// `E[Y|X]` and `E[D|X]`.
    pub fn truth(&self, name: &str) -> Option<TruthFn> {
        let g = self.g.clone();
        let a = match name {
            "ell" => self.spec.theta0 * self.c_d + self.c_y,
            "m" => self.c_d,
            "zero" => 0.0,
            _ => return None,
        };
        Some(Arc::new(move |x| a * g(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Linear,
    GradientBoosting,
}

/// Calibration settings; defaults follow the 401(k) calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub engine: Engine,
    #[serde(default = "default_calibrated_theta")]
    pub theta0: f64,
    /// Standard deviation of the treatment-index noise.
    #[serde(default = "default_kappa1")]
    pub kappa1: f64,
    /// Standard deviation of the outcome noise; engine default when absent.
    #[serde(default)]
    pub kappa2: Option<f64>,
    /// Treatment threshold on `h(x) + nu`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Boosting settings for the gradient-boosting engine.
    #[serde(default)]
    pub boosting: Option<BoostingParams>,
}

fn default_calibrated_theta() -> f64 {
    6000.0
}
fn default_kappa1() -> f64 {
    0.35
}
fn default_threshold() -> f64 {
    0.5
}

impl CalibrationSpec {
    pub fn new(engine: Engine) -> Self {
        CalibrationSpec {
            engine,
            theta0: default_calibrated_theta(),
            kappa1: default_kappa1(),
            kappa2: None,
            threshold: default_threshold(),
            boosting: None,
        }
    }

    pub fn resolved_kappa2(&self) -> f64 {
        self.kappa2.unwrap_or(match self.engine {
            Engine::Linear => 55_500.0,
            Engine::GradientBoosting => 54_000.0,
        })
    }
}

/// Generative model fitted to a real sample.
#[derive(Debug, Clone)]
pub struct CalibratedDgp {
    pub spec: CalibrationSpec,
    /// Treatment coefficient of the full-sample OLS of `y` on `d` and `x`.
    pub theta_ols: f64,
    pub kappa2: f64,
    pub g_tilde: FittedLearner,
    pub h_tilde: FittedLearner,
    source_x: Array2<f64>,
    covariate_names: Vec<String>,
}

/// Coefficient on the first treatment column in the OLS regression of `y`
/// on an intercept, `d` and `x`.
pub fn full_sample_ols(data: &Dataset) -> Result<f64> {
    let n = data.n();
    let ones = Array2::ones((n, 1));
    let design = ndarray::concatenate(Axis(1), &[ones.view(), data.d.view(), data.x.view()])
        .map_err(|e| DdmlError::Contract(e.to_string()))?;
    Ok(lstsq(design.view(), data.y.view())?.coef[1])
}

/// Fit the reduced forms of the calibrated process.
pub fn calibrate_generative(data: &Dataset, spec: CalibrationSpec, seed: u64) -> Result<CalibratedDgp> {
    if data.treatment_count() != 1 || !data.treatment_binary[0] {
        return Err(DdmlError::config("treatment not binary"));
    }
    let theta_ols = full_sample_ols(data)?;
    let partial = &data.y - &(data.d.column(0).to_owned() * theta_ols);
    let learner = match spec.engine {
        Engine::Linear => LearnerSpec::ols(),
        Engine::GradientBoosting => LearnerSpec::new(
            "gradient_boosting",
            LearnerKind::GradientBoosting(spec.boosting.clone().unwrap_or_default()),
        ),
    };
    let g_tilde = learner.clone().with_seed(derive_seed(seed, 1)).fit(data.x.view(), partial.view())?;
    let h_tilde = learner.with_seed(derive_seed(seed, 2)).fit(data.x.view(), data.d.column(0))?;
    Ok(CalibratedDgp {
        kappa2: spec.resolved_kappa2(),
        spec,
        theta_ols,
        g_tilde,
        h_tilde,
        source_x: data.x.clone(),
        covariate_names: data.covariate_names.clone(),
    })
}

impl CalibratedDgp {
    /// Bootstrap `n_b` covariate rows and draw treatment and outcome.
    pub fn draw(&self, n_b: usize, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from(seed);
        let n = self.source_x.nrows();
        let rows: Vec<usize> = (0..n_b).map(|_| rng.random_range(0..n)).collect();
        let x = self.source_x.select(Axis(0), &rows);
        let h = self.h_tilde.predict(x.view())?;
        let g = self.g_tilde.predict(x.view())?;
        let nu = Normal::new(0.0, self.spec.kappa1).map_err(|e| DdmlError::config(e.to_string()))?;
        let eps = Normal::new(0.0, self.kappa2).map_err(|e| DdmlError::config(e.to_string()))?;
        let mut d = Array2::zeros((n_b, 1));
        let mut y = Array1::zeros(n_b);
        for i in 0..n_b {
            let treated = h[i] + nu.sample(&mut rng) >= self.spec.threshold;
            d[[i, 0]] = if treated { 1.0 } else { 0.0 };
            y[i] = self.spec.theta0 * d[[i, 0]] + g[i] + eps.sample(&mut rng);
        }
        let mut ds = Dataset::new(y, d, x)?;
        ds.covariate_names = self.covariate_names.clone();
        Ok(ds)
    }

    /// `P(D=1|x) = Phi((h(x) - threshold) / kappa1)`.
    pub fn propensity(&self, x: ArrayView1<f64>) -> f64 {
        let h = self.h_tilde.predict(x.insert_axis(Axis(0))).map(|p| p[0]).unwrap_or(f64::NAN);
        if self.spec.kappa1 == 0.0 {
            return if h >= self.spec.threshold { 1.0 } else { 0.0 };
        }
        StatNormal::standard().cdf((h - self.spec.threshold) / self.spec.kappa1)
    }

    /// Oracle nuisances `ell`, `m` and `g0`.
    pub fn truth(&self, name: &str) -> Option<TruthFn> {
        let me = Arc::new(self.clone());
        match name {
            "m" => Some(Arc::new(move |x| me.propensity(x))),
            "ell" => Some(Arc::new(move |x| {
                let g = me.g_tilde.predict(x.insert_axis(Axis(0))).map(|p| p[0]).unwrap_or(f64::NAN);
                me.spec.theta0 * me.propensity(x) + g
            })),
            "g0" => Some(Arc::new(move |x| me.g_tilde.predict(x.insert_axis(Axis(0))).map(|p| p[0]).unwrap_or(f64::NAN))),
            "zero" => Some(Arc::new(|_| 0.0)),
            _ => None,
        }
    }
}

/// Bootstrap subsamples of a fixed dataset.
#[derive(Debug, Clone)]
pub struct BootstrapDgp {
    pub data: Dataset,
}

impl BootstrapDgp {
    pub fn draw(&self, n_b: usize, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from(seed);
        let rows: Vec<usize> = (0..n_b).map(|_| rng.random_range(0..self.data.n())).collect();
        Ok(self.data.select_rows(&rows))
    }
}

#[derive(Debug, Clone)]
pub enum Dgp {
    Toy(ToyDgp),
    Calibrated(Box<CalibratedDgp>),
    Bootstrap(Box<BootstrapDgp>),
}

impl Dgp {
    pub fn label(&self) -> String {
        match self {
            Dgp::Toy(t) => format!("toy_{}", if t.spec.kind == ToyKind::Linear { "linear" } else { "nonlinear" }),
            Dgp::Calibrated(c) => format!("calibrated_{}", if c.spec.engine == Engine::Linear { "linear" } else { "gradient_boosting" }),
            Dgp::Bootstrap(_) => "bootstrap".into(),
        }
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            Dgp::Toy(t) => t.draw(n, seed),
            Dgp::Calibrated(c) => c.draw(n, seed),
            Dgp::Bootstrap(b) => b.draw(n, seed),
        }
    }

    /// Known parameter, if any.
    pub fn theta0(&self) -> Option<f64> {
        match self {
            Dgp::Toy(t) => Some(t.spec.theta0),
            Dgp::Calibrated(c) => Some(c.spec.theta0),
            Dgp::Bootstrap(_) => None,
        }
    }

    pub fn truth(&self, name: &str) -> Option<TruthFn> {
        match self {
            Dgp::Toy(t) => t.truth(name),
            Dgp::Calibrated(c) => c.truth(name),
            Dgp::Bootstrap(_) => None,
        }
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub reps: usize,
    /// Sample size of each simulated dataset.
    pub n: usize,
    /// Measure bias against this value instead of the true parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

/// Metrics for one estimator across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub reps: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    /// Standard error of the mean bias.
    pub se_bias: f64,
    pub median_abs_bias: f64,
    pub coverage: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub target: String,
    pub mode: StackingMode,
    pub final_learner: FinalLearner,
    pub learner_names: Vec<String>,
    /// Fold- and replication-averaged weights.
    pub mean_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspeSummary {
    pub target: String,
    pub learner_names: Vec<String>,
    pub mean_mspe: Vec<f64>,
}

/// Per-replication estimate of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub estimator: String,
    pub theta: f64,
    pub se: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub dgp: String,
    /// Value the bias is measured against.
    pub target: f64,
    pub reps: usize,
    pub n: usize,
    pub failed_reps: usize,
    pub failure_reasons: Vec<String>,
    pub estimators: Vec<EstimatorSummary>,
    pub weights: Vec<WeightSummary>,
    pub mspe: Vec<MspeSummary>,
    pub replications: Vec<ReplicationRecord>,
    #[serde(skip)]
    pub timings: Timings,
}

impl SimulationReport {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == label)
    }

    pub fn weight(&self, target: &str, mode: StackingMode, final_learner: FinalLearner) -> Option<&WeightSummary> {
        self.weights.iter().find(|w| w.target == target && w.mode == mode && w.final_learner == final_learner)
    }

    /// One row per estimator.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| DdmlError::data(format!("csv write failed: {e}"));
        w.write_record(["estimator", "reps", "failures", "mean_estimate", "mean_bias", "se_bias", "median_abs_bias", "coverage", "mean_se"])
            .map_err(err)?;
        for e in &self.estimators {
            w.write_record([
                e.estimator.clone(),
                e.reps.to_string(),
                e.failures.to_string(),
                format!("{:?}", e.mean_estimate),
                format!("{:?}", e.mean_bias),
                format!("{:?}", e.se_bias),
                format!("{:?}", e.median_abs_bias),
                format!("{:?}", e.coverage),
                format!("{:?}", e.mean_se),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of replication `rep` under master seed `seed`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    derive_path(seed, &[STREAM_SIMULATION, rep as u64])
}

/// Run `mc.reps` replications of `dgp` through the DDML pipeline.
///
/// Oracle learners in `learners` are bound to the process's true nuisance
/// functions by truth name (`ell`, `m`, `g0`, `zero`). A replication whose
/// estimation fails is excluded from the metrics and counted.
pub fn run_monte_carlo(
    dgp: &Dgp,
    learners: &NuisanceLearners,
    cfg: &DdmlConfig,
    mc: &MonteCarloSpec,
    seed: u64,
) -> Result<SimulationReport> {
    if mc.reps < 1 {
        return Err(DdmlError::config("at least one replication is required"));
    }
    cfg.validate()?;
    let target = mc.reference.or(dgp.theta0()).ok_or_else(|| {
        DdmlError::config("bootstrap simulation needs a reference estimate to measure bias against")
    })?;
    let mut bound = learners.clone();
    for list in bound.all_mut() {
        bind_truths(list, |name| dgp.truth(name));
    }

    let outcomes: Vec<Result<DdmlResult>> = (0..mc.reps)
        .into_par_iter()
        .map(|r| {
            let rs = replication_seed(seed, r);
            let data = dgp.draw(mc.n, derive_seed(rs, 0))?;
            run_ddml(&data, &bound, cfg, derive_seed(rs, 1))
        })
        .collect();

    let mut labels: Vec<String> = Vec::new();
    let mut records = Vec::new();
    let mut failure_reasons = Vec::new();
    let mut timings = Timings::default();
    let mut weight_acc: Vec<(String, StackingMode, FinalLearner, Vec<String>, Array1<f64>, usize)> = Vec::new();
    let mut mspe_acc: Vec<(String, Vec<String>, Array1<f64>, usize)> = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let res = match outcome {
            Ok(res) => res,
            Err(e) => {
                if e.kind() == "config" || e.kind() == "contract" {
                    return Err(e);
                }
                log::warn!("replication {} failed: {e}", r + 1);
                failure_reasons.push(format!("rep {}: {e}", r + 1));
                continue;
            }
        };
        timings.plain_secs += res.timings.plain_secs;
        timings.nested_secs += res.timings.nested_secs;
        timings.total_secs += res.timings.total_secs;
        for est in &res.estimates {
            if !labels.contains(&est.label) {
                labels.push(est.label.clone());
            }
            let agg = &est.result.aggregate;
            records.push(ReplicationRecord {
                rep: r,
                estimator: est.label.clone(),
                theta: agg.theta[0],
                se: agg.se[0],
                covered: agg.covers(0, target),
            });
        }
        for trace in &res.repetitions {
            for wt in &trace.weights {
                let w = &wt.weights;
                let mean = w.mean_weights();
                match weight_acc.iter_mut().find(|a| a.0 == wt.target && a.1 == w.mode && a.2 == w.final_learner) {
                    Some(a) => {
                        a.4 += &mean;
                        a.5 += 1;
                    }
                    None => weight_acc.push((wt.target.clone(), w.mode, w.final_learner, w.learner_names.clone(), mean, 1)),
                }
            }
            for m in &trace.mspe {
                let v = Array1::from(m.mspe.clone());
                match mspe_acc.iter_mut().find(|a| a.0 == m.target) {
                    Some(a) => {
                        a.2 += &v;
                        a.3 += 1;
                    }
                    None => mspe_acc.push((m.target.clone(), m.learner_names.clone(), v, 1)),
                }
            }
        }
    }
    let failed_reps = failure_reasons.len();
    let estimators = labels
        .iter()
        .map(|label| {
            let rs: Vec<&ReplicationRecord> = records.iter().filter(|x| &x.estimator == label).collect();
            summarize(label, &rs, target, failed_reps)
        })
        .collect();
    Ok(SimulationReport {
        dgp: dgp.label(),
        target,
        reps: mc.reps,
        n: mc.n,
        failed_reps,
        failure_reasons,
        estimators,
        weights: weight_acc
            .into_iter()
            .map(|(target, mode, final_learner, learner_names, sum, count)| WeightSummary {
                target,
                mode,
                final_learner,
                learner_names,
                mean_weights: (sum / count as f64).to_vec(),
            })
            .collect(),
        mspe: mspe_acc
            .into_iter()
            .map(|(target, learner_names, sum, count)| MspeSummary { target, learner_names, mean_mspe: (sum / count as f64).to_vec() })
            .collect(),
        replications: records,
        timings,
    })
}

fn summarize(label: &str, rs: &[&ReplicationRecord], target: f64, failures: usize) -> EstimatorSummary {
    let k = rs.len();
    if k == 0 {
        return EstimatorSummary {
            estimator: label.into(),
            reps: 0,
            failures,
            mean_estimate: f64::NAN,
            mean_bias: f64::NAN,
            se_bias: f64::NAN,
            median_abs_bias: f64::NAN,
            coverage: f64::NAN,
            mean_se: f64::NAN,
        };
    }
    let kf = k as f64;
    let bias: Vec<f64> = rs.iter().map(|r| r.theta - target).collect();
    let mean_bias = bias.iter().sum::<f64>() / kf;
    let sd = if k > 1 {
        (bias.iter().map(|b| (b - mean_bias).powi(2)).sum::<f64>() / (kf - 1.0)).sqrt()
    } else {
        0.0
    };
    let abs: Vec<f64> = bias.iter().map(|b| b.abs()).collect();
    EstimatorSummary {
        estimator: label.into(),
        reps: k,
        failures,
        mean_estimate: rs.iter().map(|r| r.theta).sum::<f64>() / kf,
        mean_bias,
        se_bias: sd / kf.sqrt(),
        median_abs_bias: median(&abs),
        coverage: rs.iter().filter(|r| r.covered).count() as f64 / kf,
        mean_se: rs.iter().map(|r| r.se).sum::<f64>() / kf,
    }
}
