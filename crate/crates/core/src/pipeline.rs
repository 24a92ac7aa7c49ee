//! End-to-end DDML: folds, cross-fitting, stacking and estimation over
//! repetitions.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::crossfit::{cross_fit, make_folds, make_stratified_folds, repeat_plan, CrossFitMatrix, NuisanceProblem, Target};
use crate::data::Dataset;
use crate::error::{DdmlError, Result};
use crate::estimators::{
    atet_estimate, fold_treated_share, plm_estimate, Aggregation, AtetVariance, EstimateMeta, NuisanceEstimates,
    PointEstimate, RepetitionSet,
};
use crate::learners::LearnerSpec;
use crate::rng::derive_seed;
use crate::stacking::{stack, FinalLearner, StackingMode, StackingWeights};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Partially linear model.
    #[default]
    Plm,
    /// Average treatment effect on the treated.
    Atet,
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdmlConfig {
    pub model: Model,
    /// Cross-fitting folds.
    pub k: usize,
    /// Nested cross-validation folds for conventional and pooled stacking.
    pub v: usize,
    /// Cross-fitting repetitions.
    pub repetitions: usize,
    pub aggregation: Aggregation,
    pub stacking: Vec<StackingMode>,
    pub final_learners: Vec<FinalLearner>,
    /// Also report DDML with each candidate learner on its own.
    pub candidates: bool,
    /// Stratify folds on the (first) treatment column.
    pub stratify: bool,
    pub atet_variance: AtetVariance,
}

impl Default for DdmlConfig {
    fn default() -> Self {
        DdmlConfig {
            model: Model::Plm,
            k: 5,
            v: 5,
            repetitions: 1,
            aggregation: Aggregation::Median,
            stacking: vec![StackingMode::Short],
            final_learners: vec![FinalLearner::Cls],
            candidates: true,
            stratify: false,
            atet_variance: AtetVariance::Influence,
        }
    }
}

impl DdmlConfig {
    pub fn needs_nested(&self) -> bool {
        self.stacking.iter().any(|m| m.needs_nested())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(DdmlError::config(format!("K must be at least 2, got {}", self.k)));
        }
        if self.needs_nested() && self.v < 2 {
            return Err(DdmlError::config(format!("V must be at least 2 for nested stacking, got {}", self.v)));
        }
        if self.repetitions < 1 {
            return Err(DdmlError::config("at least one repetition is required"));
        }
        if self.stacking.is_empty() != self.final_learners.is_empty() {
            return Err(DdmlError::config("stacking modes and final learners must both be set or both be empty"));
        }
        if self.stacking.is_empty() && !self.candidates {
            return Err(DdmlError::config("nothing to estimate: no stacking modes and candidates disabled"));
        }
        Ok(())
    }
}

/// Candidate learners per nuisance function; `learners` is the default for
/// any target without its own list.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceLearners {
    pub learners: Vec<LearnerSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<Vec<LearnerSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<LearnerSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0: Option<Vec<LearnerSpec>>,
}

impl NuisanceLearners {
    pub fn shared(learners: Vec<LearnerSpec>) -> Self {
        NuisanceLearners { learners, ..Default::default() }
    }

    pub fn for_target(&self, target: Target) -> &[LearnerSpec] {
        let own = match target {
            Target::Ell => &self.ell,
            Target::M(_) => &self.m,
            Target::G0 => &self.g0,
        };
        own.as_deref().unwrap_or(&self.learners)
    }

    pub fn all_mut(&mut self) -> impl Iterator<Item = &mut Vec<LearnerSpec>> {
        std::iter::once(&mut self.learners).chain(self.ell.iter_mut()).chain(self.m.iter_mut()).chain(self.g0.iter_mut())
    }
}

/// Weights fitted for one target in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub target: String,
    #[serde(flatten)]
    pub weights: StackingWeights,
}

/// Per-learner out-of-fold MSPE of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspeTable {
    pub target: String,
    pub learner_names: Vec<String>,
    pub mspe: Vec<f64>,
    /// Candidate-learner fits performed for this target.
    pub fit_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionTrace {
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub weights: Vec<WeightTable>,
    pub mspe: Vec<MspeTable>,
}

/// Wall-clock split of one run; kept apart from the deterministic payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Plain cross-fitting: everything short-stacking needs.
    pub plain_secs: f64,
    /// Nested cross-validation added by conventional and pooled stacking.
    pub nested_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub label: String,
    pub result: RepetitionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmlResult {
    pub model: Model,
    pub n: usize,
    pub treatment_names: Vec<String>,
    pub estimates: Vec<EstimatorResult>,
    pub repetitions: Vec<RepetitionTrace>,
    #[serde(skip)]
    pub timings: Timings,
}

impl DdmlResult {
    pub fn estimate(&self, label: &str) -> Option<&RepetitionSet> {
        self.estimates.iter().find(|e| e.label == label).map(|e| &e.result)
    }

    /// Total candidate-learner fits per target, summed over repetitions.
    pub fn fit_count(&self, target: &str) -> usize {
        self.repetitions.iter().flat_map(|r| &r.mspe).filter(|m| m.target == target).map(|m| m.fit_count).sum()
    }
}

pub fn stacking_label(mode: StackingMode, final_learner: FinalLearner) -> String {
    format!("{}_{}", mode.label(), final_learner.label())
}

pub fn candidate_label(name: &str) -> String {
    format!("learner_{name}")
}

fn target_code(t: Target) -> u64 {
    match t {
        Target::Ell => 1,
        Target::G0 => 2,
        Target::M(j) => 16 + j as u64,
    }
}

/// Run DDML on `data` with master seed `seed`.
pub fn run_ddml(data: &Dataset, learners: &NuisanceLearners, cfg: &DdmlConfig, seed: u64) -> Result<DdmlResult> {
    cfg.validate()?;
    let q = data.treatment_count();
    let targets: Vec<Target> = match cfg.model {
        Model::Plm => std::iter::once(Target::Ell).chain((0..q).map(Target::M)).collect(),
        Model::Atet => {
            if q != 1 {
                return Err(DdmlError::config(format!("ATET takes exactly one treatment column, got {q}")));
            }
            if !data.treatment_binary[0] {
                return Err(DdmlError::config("treatment not binary"));
            }
            vec![Target::G0, Target::M(0)]
        }
    };
    let mut j_count = None;
    for &t in &targets {
        let list = learners.for_target(t);
        if list.is_empty() {
            return Err(DdmlError::config(format!("no candidate learners for target {}", t.label())));
        }
        if cfg.candidates && *j_count.get_or_insert(list.len()) != list.len() {
            return Err(DdmlError::config("per-learner estimates need the same number of learners for every target"));
        }
    }

    let started = Instant::now();
    let mut plain = Duration::ZERO;
    let mut nested = Duration::ZERO;
    let mut per_label: BTreeMap<String, Vec<PointEstimate>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut traces = Vec::with_capacity(cfg.repetitions);

    for (r, rep_seed) in repeat_plan(cfg.repetitions, seed).into_iter().enumerate() {
        let folds = if cfg.stratify {
            make_stratified_folds(data.d.column(0), cfg.k, rep_seed)?
        } else {
            make_folds(data.n(), cfg.k, rep_seed)?
        };
        let p_hat = match cfg.model {
            Model::Atet => Some(fold_treated_share(data.d.column(0), &folds)?),
            Model::Plm => None,
        };
        let mut matrices: Vec<CrossFitMatrix> = Vec::with_capacity(targets.len());
        for &t in &targets {
            let problem = NuisanceProblem::from_dataset(data, t);
            let nested_v = cfg.needs_nested().then_some(cfg.v);
            let cfm = cross_fit(&problem, learners.for_target(t), &folds, nested_v, derive_seed(rep_seed, target_code(t)))?;
            plain += cfm.elapsed_plain;
            nested += cfm.elapsed_nested;
            matrices.push(cfm);
        }

        let meta_base = EstimateMeta { k: cfg.k, r: 1, ..Default::default() };
        let mut emit = |label: String, est: PointEstimate| {
            if !per_label.contains_key(&label) {
                order.push(label.clone());
            }
            per_label.entry(label).or_default().push(est);
        };
        let estimate = |columns: Vec<Array1<f64>>| -> Result<PointEstimate> {
            match cfg.model {
                Model::Plm => {
                    let mut m_hat = Array2::zeros((data.n(), q));
                    for j in 0..q {
                        m_hat.column_mut(j).assign(&columns[1 + j]);
                    }
                    plm_estimate(data.y.view(), data.d.view(), &NuisanceEstimates::plm(columns[0].clone(), m_hat))
                }
                Model::Atet => {
                    let nuis = NuisanceEstimates::atet(columns[0].clone(), columns[1].clone(), p_hat.clone().expect("ATET p_hat"));
                    Ok(atet_estimate(data.y.view(), data.d.column(0), &nuis, cfg.atet_variance)?.estimate)
                }
            }
        };

        let mut weight_tables = Vec::new();
        for &mode in &cfg.stacking {
            for &fl in &cfg.final_learners {
                let mut cols = Vec::with_capacity(targets.len());
                for cfm in &matrices {
                    let res = stack(cfm, mode, fl)?;
                    weight_tables.push(WeightTable { target: cfm.target.label(), weights: res.weights });
                    cols.push(res.predictions);
                }
                let meta = EstimateMeta {
                    label: stacking_label(mode, fl),
                    stacking: Some(mode),
                    final_learner: Some(fl),
                    v: mode.needs_nested().then_some(cfg.v),
                    ..meta_base.clone()
                };
                emit(meta.label.clone(), estimate(cols)?.with_meta(meta));
            }
        }
        if cfg.candidates {
            for (j, spec) in learners.for_target(targets[0]).iter().enumerate() {
                let cols = matrices.iter().map(|m| m.preds.column(j).to_owned()).collect();
                let meta = EstimateMeta { label: candidate_label(&spec.name), learner: Some(spec.name.clone()), ..meta_base.clone() };
                emit(meta.label.clone(), estimate(cols)?.with_meta(meta));
            }
        }
        log::debug!("repetition {} done", r + 1);
        traces.push(RepetitionTrace {
            seed: rep_seed,
            fold_sizes: folds.sizes(),
            weights: weight_tables,
            mspe: matrices
                .iter()
                .map(|m| MspeTable { target: m.target.label(), learner_names: m.learner_names.clone(), mspe: m.mspe.clone(), fit_count: m.fit_count })
                .collect(),
        });
    }

    let estimates = order
        .into_iter()
        .map(|label| {
            let reps = per_label.remove(&label).expect("label recorded");
            Ok(EstimatorResult { label, result: RepetitionSet::new(reps, cfg.aggregation)? })
        })
        .collect::<Result<_>>()?;
    Ok(DdmlResult {
        model: cfg.model,
        n: data.n(),
        treatment_names: data.treatment_names.clone(),
        estimates,
        repetitions: traces,
        timings: Timings {
            plain_secs: plain.as_secs_f64(),
            nested_secs: nested.as_secs_f64(),
            total_secs: started.elapsed().as_secs_f64(),
        },
    })
}
