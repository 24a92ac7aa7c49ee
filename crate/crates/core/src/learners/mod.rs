//! Candidate learners behind a uniform fit/predict interface.
//!
//! Every learner is described by a serializable [`LearnerSpec`]; fitting it
//! returns a [`FittedLearner`] whose `predict` is pure. All randomness is
//! drawn from `seed_stream`, so two fits of the same spec on the same data
//! give bit-identical predictions regardless of thread count.

mod boosting;
mod forest;
mod lasso;
mod linear;
mod logistic;
mod tree;

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{DdmlError, Result};
use crate::transform::{apply_transform, fit_transform, TransformPlan, TransformStep};

pub use boosting::BoostingParams;
pub use forest::ForestParams;
pub use lasso::{lasso_coordinate_descent, LassoParams, StandardizedDesign};
pub use linear::{ridge_closed_form, RidgeParams};
pub use logistic::LogisticParams;

/// Clipping bound for probability predictions.
pub const PROBABILITY_EPS: f64 = 1e-6;

pub type TruthFn = Arc<dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync>;

/// A known conditional expectation function, used by the oracle learner.
///
/// Only the name is serialized. A truth read back from a config file is
/// unbound until a data-generating process supplies the function.
#[derive(Clone, Default, Serialize, Deserialize)]
pub struct Truth {
    #[serde(default, rename = "truth")]
    pub name: String,
    #[serde(skip)]
    func: Option<TruthFn>,
}

impl Truth {
    pub fn new(name: impl Into<String>, f: impl Fn(ArrayView1<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Truth { name: name.into(), func: Some(Arc::new(f)) }
    }

    /// An unbound truth, to be bound later by name.
    pub fn named(name: impl Into<String>) -> Self {
        Truth { name: name.into(), func: None }
    }

    pub fn from_arc(name: impl Into<String>, f: TruthFn) -> Self {
        Truth { name: name.into(), func: Some(f) }
    }

    pub fn is_bound(&self) -> bool {
        self.func.is_some()
    }

    pub fn bind(&mut self, f: TruthFn) {
        self.func = Some(f);
    }
}

/// Bind every unbound oracle in `specs` whose truth name `lookup` knows.
pub fn bind_truths(specs: &mut [LearnerSpec], lookup: impl Fn(&str) -> Option<TruthFn>) {
    for spec in specs {
        if let LearnerKind::Oracle(truth) = &mut spec.kind {
            if !truth.is_bound() {
                if let Some(f) = lookup(&truth.name) {
                    truth.bind(f);
                }
            }
        }
    }
}

impl fmt::Debug for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Truth").field("name", &self.name).field("bound", &self.is_bound()).finish()
    }
}

/// Learner family and its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    RidgeCv(RidgeParams),
    LassoCv(LassoParams),
    RandomForest(ForestParams),
    GradientBoosting(BoostingParams),
    Logistic(LogisticParams),
    Oracle(Truth),
}

impl LearnerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LearnerKind::Ols => "ols",
            LearnerKind::RidgeCv(_) => "ridge_cv",
            LearnerKind::LassoCv(_) => "lasso_cv",
            LearnerKind::RandomForest(_) => "random_forest",
            LearnerKind::GradientBoosting(_) => "gradient_boosting",
            LearnerKind::Logistic(_) => "logistic",
            LearnerKind::Oracle(_) => "oracle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LearnerKind,
    /// Covariate expansion fitted on the training rows of every fit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transform: Vec<TransformStep>,
    #[serde(default)]
    pub seed_stream: u64,
}

impl LearnerSpec {
    pub fn new(name: impl Into<String>, kind: LearnerKind) -> Self {
        LearnerSpec { name: name.into(), kind, transform: Vec::new(), seed_stream: 0 }
    }

    pub fn with_transform(mut self, steps: Vec<TransformStep>) -> Self {
        self.transform = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_stream = seed;
        self
    }

    pub fn ols() -> Self {
        Self::new("ols", LearnerKind::Ols)
    }

    /// Cross-validated lasso on levels, squares and pairwise interactions.
    pub fn lasso_poly2() -> Self {
        Self::new("lasso_cv_poly2", LearnerKind::LassoCv(LassoParams::default()))
            .with_transform(vec![TransformStep::poly2_interactions()])
    }

    pub fn lasso() -> Self {
        Self::new("lasso_cv", LearnerKind::LassoCv(LassoParams::default()))
    }

    pub fn ridge() -> Self {
        Self::new("ridge_cv", LearnerKind::RidgeCv(RidgeParams::default()))
    }

    /// Random forest with little regularization: 8 candidate predictors per
    /// split, no minimum node size, 70% bootstrap samples.
    pub fn rf_low() -> Self {
        Self::new("rf_low", LearnerKind::RandomForest(ForestParams::low_regularization()))
    }

    /// Gradient-boosted trees with little regularization: 500 trees of
    /// depth 3, learning rate 0.01.
    pub fn gbt_low() -> Self {
        Self::new("gbt_low", LearnerKind::GradientBoosting(BoostingParams::default()))
    }

    pub fn logistic() -> Self {
        Self::new("logistic", LearnerKind::Logistic(LogisticParams::default()))
    }

    pub fn oracle(truth: Truth) -> Self {
        Self::new(format!("oracle_{}", truth.name), LearnerKind::Oracle(truth))
    }

    /// Fit on `x`/`y`.
    pub fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<FittedLearner> {
        fit(self, x, y)
    }
}

/// Training diagnostics reported by a fitted learner.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub in_sample_mse: f64,
    /// Penalty chosen by internal cross-validation (`*_cv` kinds).
    pub chosen_penalty: Option<f64>,
    pub rank_deficient: bool,
    /// Trees actually kept (boosting with early stopping).
    pub trees_used: Option<usize>,
}

#[derive(Clone)]
enum Model {
    Constant(f64),
    Linear { intercept: f64, coef: Array1<f64> },
    Forest(forest::Forest),
    Boosting(boosting::Boosted),
    Logistic { intercept: f64, coef: Array1<f64> },
    Oracle(TruthFn),
}

/// A trained learner.
#[derive(Clone)]
pub struct FittedLearner {
    spec: LearnerSpec,
    n_inputs: usize,
    transform: Option<TransformPlan>,
    model: Model,
    pub diagnostics: Diagnostics,
}

impl fmt::Debug for FittedLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FittedLearner")
            .field("name", &self.spec.name)
            .field("kind", &self.spec.kind.label())
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

/// Fit `spec` on training data.
pub fn fit(spec: &LearnerSpec, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<FittedLearner> {
    let n = x.nrows();
    if y.len() != n {
        return Err(DdmlError::Shape { expected: n, got: y.len() });
    }
    if let LearnerKind::Oracle(truth) = &spec.kind {
        let f = truth.func.clone().ok_or_else(|| {
            DdmlError::config(format!("oracle learner `{}` has no bound truth function", spec.name))
        })?;
        return Ok(FittedLearner {
            spec: spec.clone(),
            n_inputs: x.ncols(),
            transform: None,
            model: Model::Oracle(f),
            diagnostics: Diagnostics::default(),
        });
    }
    if n < 2 {
        return Err(DdmlError::data(format!("learner `{}` needs at least 2 rows, got {n}", spec.name)));
    }
    if let LearnerKind::Logistic(_) = spec.kind {
        if !crate::data::is_binary(y) {
            return Err(DdmlError::config(format!(
                "logistic learner `{}` requires a binary target",
                spec.name
            )));
        }
    }
    let (transform, design) = if spec.transform.is_empty() {
        (None, None)
    } else {
        let plan = fit_transform(&spec.transform, x)?;
        let z = apply_transform(&plan, x)?;
        (Some(plan), Some(z))
    };
    let xt = design.as_ref().map(|z| z.view()).unwrap_or(x);

    let y0 = y[0];
    let mut diagnostics = Diagnostics::default();
    let model = if y.iter().all(|&v| v == y0) {
        Model::Constant(y0)
    } else {
        match &spec.kind {
            LearnerKind::Ols => {
                let fit = linear::fit_ols(xt, y)?;
                diagnostics.rank_deficient = fit.rank_deficient;
                if fit.rank_deficient {
                    log::debug!("ols `{}`: rank-deficient design, minimum-norm solution", spec.name);
                }
                Model::Linear { intercept: fit.intercept, coef: fit.coef }
            }
            LearnerKind::RidgeCv(p) => {
                let fit = linear::fit_ridge_cv(xt, y, p, spec.seed_stream)?;
                diagnostics.chosen_penalty = Some(fit.lambda);
                Model::Linear { intercept: fit.intercept, coef: fit.coef }
            }
            LearnerKind::LassoCv(p) => {
                let fit = lasso::fit_lasso_cv(xt, y, p, spec.seed_stream)?;
                diagnostics.chosen_penalty = Some(fit.lambda);
                Model::Linear { intercept: fit.intercept, coef: fit.coef }
            }
            LearnerKind::RandomForest(p) => Model::Forest(forest::fit_forest(xt, y, p, spec.seed_stream)?),
            LearnerKind::GradientBoosting(p) => {
                let b = boosting::fit_boosting(xt, y, p, spec.seed_stream)?;
                diagnostics.trees_used = Some(b.trees_used());
                Model::Boosting(b)
            }
            LearnerKind::Logistic(p) => {
                let (intercept, coef) = logistic::fit_logistic(xt, y, p)?;
                Model::Logistic { intercept, coef }
            }
            LearnerKind::Oracle(_) => unreachable!(),
        }
    };
    let mut fitted =
        FittedLearner { spec: spec.clone(), n_inputs: x.ncols(), transform, model, diagnostics };
    let fitted_values = fitted.predict_transformed(xt);
    fitted.diagnostics.in_sample_mse =
        fitted_values.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    Ok(fitted)
}

/// An oracle learner that ignores training data and returns `truth(x)`.
pub fn oracle_learner(truth: Truth, n_inputs: usize) -> Result<FittedLearner> {
    let empty_x = Array2::zeros((0, n_inputs));
    fit(&LearnerSpec::oracle(truth), empty_x.view(), Array1::zeros(0).view())
}

impl FittedLearner {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    /// Linear coefficients on the (transformed) design, if the model is linear.
    pub fn linear_coefficients(&self) -> Option<(f64, &Array1<f64>)> {
        match &self.model {
            Model::Linear { intercept, coef } | Model::Logistic { intercept, coef } => {
                Some((*intercept, coef))
            }
            _ => None,
        }
    }

    /// Predict for every row of `x`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_inputs {
            return Err(DdmlError::Shape { expected: self.n_inputs, got: x.ncols() });
        }
        if let Model::Oracle(f) = &self.model {
            return Ok(x.rows().into_iter().map(|r| f(r)).collect());
        }
        match &self.transform {
            Some(plan) => {
                let z = apply_transform(plan, x)?;
                Ok(self.predict_transformed(z.view()))
            }
            None => Ok(self.predict_transformed(x)),
        }
    }

    fn predict_transformed(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let clip = matches!(self.spec.kind, LearnerKind::Logistic(_));
        let raw: Array1<f64> = match &self.model {
            Model::Constant(c) => Array1::from_elem(x.nrows(), *c),
            Model::Linear { intercept, coef } => x.dot(coef) + *intercept,
            Model::Forest(f) => f.predict(x),
            Model::Boosting(b) => b.predict(x),
            Model::Logistic { intercept, coef } => {
                (x.dot(coef) + *intercept).mapv(|eta| 1.0 / (1.0 + (-eta).exp()))
            }
            Model::Oracle(f) => x.rows().into_iter().map(|r| f(r)).collect(),
        };
        if clip {
            raw.mapv(|p| p.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS))
        } else {
            raw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed);
        Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ols_exact_linear_fit() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![2.0, 4.0, 6.0];
        let f = LearnerSpec::ols().fit(x.view(), y.view()).unwrap();
        let (b0, b) = f.linear_coefficients().unwrap();
        assert!(b0.abs() < 1e-12);
        assert!((b[0] - 2.0).abs() < 1e-12);
        let pred = f.predict(x.view()).unwrap();
        for (p, t) in pred.iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_rank_deficiency_is_flagged() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = array![1.0, 2.0, 2.5, 4.0];
        let f = LearnerSpec::ols().fit(x.view(), y.view()).unwrap();
        assert!(f.diagnostics.rank_deficient);
        assert!(f.predict(x.view()).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_target_gives_constant_predictor_for_every_kind() {
        let x = random_design(30, 3, 1);
        let y = Array1::from_elem(30, 2.5);
        for spec in [
            LearnerSpec::ols(),
            LearnerSpec::ridge(),
            LearnerSpec::lasso(),
            LearnerSpec::rf_low(),
            LearnerSpec::gbt_low(),
        ] {
            let f = spec.fit(x.view(), y.view()).unwrap();
            let pred = f.predict(random_design(5, 3, 2).view()).unwrap();
            assert!(pred.iter().all(|&p| p == 2.5), "{}", spec.name);
        }
    }

    #[test]
    fn single_leaf_forest_predicts_training_mean() {
        let x = random_design(40, 4, 3);
        let y: Array1<f64> = (0..40).map(|i| i as f64).collect();
        let params = ForestParams { n_trees: 1, min_node_size: 40, bootstrap: false, subsample_fraction: 1.0, ..ForestParams::default() };
        let spec = LearnerSpec::new("rf", LearnerKind::RandomForest(params));
        let f = spec.fit(x.view(), y.view()).unwrap();
        let pred = f.predict(random_design(6, 4, 4).view()).unwrap();
        let mean = y.sum() / 40.0;
        assert!(pred.iter().all(|&p| (p - mean).abs() < 1e-12));
    }

    #[test]
    fn zero_learning_rate_boosting_predicts_mean() {
        let x = random_design(50, 2, 5);
        let y: Array1<f64> = x.column(0).mapv(|v| 3.0 * v + 1.0);
        let params = BoostingParams { learning_rate: 0.0, n_trees: 20, ..BoostingParams::default() };
        let spec = LearnerSpec::new("gbt", LearnerKind::GradientBoosting(params));
        let f = spec.fit(x.view(), y.view()).unwrap();
        let mean = y.sum() / 50.0;
        let pred = f.predict(x.view()).unwrap();
        assert!(pred.iter().all(|&p| p == mean));
    }

    #[test]
    fn oracle_passes_truth_through() {
        let zero = oracle_learner(Truth::new("zero", |_| 0.0), 3).unwrap();
        assert!(zero.predict(random_design(4, 3, 6).view()).unwrap().iter().all(|&p| p == 0.0));

        let x = random_design(20, 12, 7);
        let truth = Truth::new("linear", |r: ArrayView1<f64>| {
            r.iter().enumerate().map(|(j, v)| 0.9f64.powi(j as i32 + 1) * v).sum()
        });
        let o = oracle_learner(truth, 12).unwrap();
        let pred = o.predict(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let closed: f64 = (0..12).map(|j| 0.9f64.powi(j as i32 + 1) * row[j]).sum();
            assert!((pred[i] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn unbound_oracle_is_a_config_error() {
        let spec: LearnerSpec = serde_json::from_str(r#"{"name":"o","kind":"oracle"}"#).unwrap();
        let x = random_design(3, 1, 1);
        let err = spec.fit(x.view(), array![1.0, 2.0, 3.0].view()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn predict_checks_column_count() {
        let x = random_design(10, 2, 8);
        let y = x.column(0).to_owned();
        let f = LearnerSpec::ols().fit(x.view(), y.view()).unwrap();
        assert!(matches!(f.predict(random_design(3, 3, 9).view()), Err(DdmlError::Shape { .. })));
    }

    #[test]
    fn logistic_predictions_in_open_unit_interval() {
        let x = random_design(200, 2, 10);
        let y: Array1<f64> = x.column(0).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let f = LearnerSpec::logistic().fit(x.view(), y.view()).unwrap();
        let pred = f.predict(x.view()).unwrap();
        assert!(pred.iter().all(|&p| p > 0.0 && p < 1.0));
        let err = LearnerSpec::logistic().fit(x.view(), x.column(1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fits_are_deterministic_given_seed_stream() {
        let x = random_design(120, 5, 11);
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * r[1] + r[2]).collect();
        for spec in [LearnerSpec::rf_low(), LearnerSpec::gbt_low(), LearnerSpec::lasso_poly2(), LearnerSpec::ridge()] {
            let spec = spec.with_seed(99);
            let a = spec.fit(x.view(), y.view()).unwrap().predict(x.view()).unwrap();
            let b = spec.fit(x.view(), y.view()).unwrap().predict(x.view()).unwrap();
            assert_eq!(a, b, "{}", spec.name);
        }
    }

    #[test]
    fn tree_regularization_monotone_in_sample() {
        for seed in 0..5 {
            let x = random_design(60, 3, 100 + seed);
            let y: Array1<f64> = x.rows().into_iter().map(|r| r[0].sin() + 0.3 * r[1]).collect();
            let mse = |min_node: usize| {
                let p = ForestParams {
                    n_trees: 1,
                    min_node_size: min_node,
                    bootstrap: false,
                    subsample_fraction: 1.0,
                    max_features: None,
                    ..ForestParams::default()
                };
                LearnerSpec::new("t", LearnerKind::RandomForest(p))
                    .fit(x.view(), y.view())
                    .unwrap()
                    .diagnostics
                    .in_sample_mse
            };
            assert!(mse(1) <= mse(60));
        }
    }

    #[test]
    fn learner_spec_config_round_trip() {
        let toml_src = r#"
            name = "rf"
            kind = "random_forest"
            n_trees = 50
            max_features = 8
            transform = [{ step = "polynomial", order = 2, interactions = true }]
        "#;
        let spec: LearnerSpec = toml::from_str(toml_src).unwrap();
        match &spec.kind {
            LearnerKind::RandomForest(p) => {
                assert_eq!(p.n_trees, 50);
                assert_eq!(p.max_features, Some(8));
                assert_eq!(p.min_node_size, ForestParams::default().min_node_size);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(spec.transform, vec![TransformStep::poly2_interactions()]);
        let back: LearnerSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back.name, "rf");
    }
}
