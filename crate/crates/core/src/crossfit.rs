//! Fold management and the cross-fitting engine.
//!
//! [`cross_fit`] produces, for one nuisance target, the out-of-fold
//! predictions of every candidate learner and (optionally) the nested
//! cross-validated predictions used by conventional and pooled stacking:
//!
//! * plain: learner `j` trained on `T_k = I \ I_k`, predicting `I_k`;
//! * nested: `T_k` split into `V` sub-folds, learner `j` trained on
//!   `T_k \ T_{k,v}`, predicting `T_{k,v}`.
//!
//! The plain fits double as the `T_k` refits that conventional and pooled
//! stacking apply to `I_k`, so they are computed once and shared.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DdmlError, Result};
use crate::learners::LearnerSpec;
use crate::rng::{derive_path, derive_seed, rng_from, STREAM_FOLDS, STREAM_LEARNER, STREAM_NESTED, STREAM_REPETITION};

/// A partition of `0..n` into `k` folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n: usize,
    pub k: usize,
    /// Zero-based fold of each observation.
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    /// Observations in fold `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// (training rows, held-out rows) for fold `k`.
    pub fn split(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n).partition(|&i| self.fold_of[i] != k)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

fn check_fold_count(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(DdmlError::config(format!("need 2 <= K <= n, got K={k}, n={n}")));
    }
    Ok(())
}

/// Uniformly random partition of `0..n` into `k` folds.
///
/// Observations are shuffled and cut into consecutive chunks; with
/// `r = n mod k`, the first `r` folds get one extra observation.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_fold_count(n, k)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(derive_seed(seed, STREAM_FOLDS)));
    let base = n / k;
    let extra = n % k;
    let mut fold_of = vec![0; n];
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &perm[at..at + size] {
            fold_of[i] = f;
        }
        at += size;
    }
    Ok(FoldAssignment { n, k, fold_of, seed })
}

/// Folds stratified on a binary label: each class is shuffled separately and
/// dealt round-robin, so every fold gets a near-equal share of both classes.
pub fn make_stratified_folds(labels: ArrayView1<f64>, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = labels.len();
    check_fold_count(n, k)?;
    let mut rng = rng_from(derive_seed(seed, STREAM_FOLDS));
    let mut zeros: Vec<usize> = (0..n).filter(|&i| labels[i] == 0.0).collect();
    let mut ones: Vec<usize> = (0..n).filter(|&i| labels[i] != 0.0).collect();
    zeros.shuffle(&mut rng);
    ones.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (t, &i) in zeros.iter().chain(ones.iter()).enumerate() {
        fold_of[i] = t % k;
    }
    Ok(FoldAssignment { n, k, fold_of, seed })
}

/// `R` per-repetition seeds; the first is `base_seed` itself.
pub fn repeat_plan(r: usize, base_seed: u64) -> Vec<u64> {
    let mut seeds: Vec<u64> = Vec::with_capacity(r);
    let mut label = 0u64;
    while seeds.len() < r {
        let s = if seeds.is_empty() {
            base_seed
        } else {
            derive_path(base_seed, &[STREAM_REPETITION, label])
        };
        label += 1;
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    seeds
}

/// Which conditional expectation a cross-fit matrix estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// E[Y | X]
    Ell,
    /// E[D_j | X]
    M(usize),
    /// E[Y | D = 0, X]
    G0,
}

impl Target {
    pub fn label(&self) -> String {
        match self {
            Target::Ell => "ell".into(),
            Target::M(j) => format!("m{}", j + 1),
            Target::G0 => "g0".into(),
        }
    }
}

/// Design, response and training-eligibility mask for one nuisance function.
#[derive(Debug, Clone)]
pub struct NuisanceProblem<'a> {
    pub target: Target,
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    /// Rows usable for training and for fitting stacking weights (e.g.
    /// controls only for `g0`). `None` means all rows.
    pub eligible: Option<Vec<bool>>,
}

impl<'a> NuisanceProblem<'a> {
    pub fn from_dataset(ds: &'a Dataset, target: Target) -> Self {
        match target {
            Target::Ell => NuisanceProblem { target, x: ds.x.view(), y: ds.y.view(), eligible: None },
            Target::M(j) => NuisanceProblem { target, x: ds.x.view(), y: ds.d.column(j), eligible: None },
            Target::G0 => NuisanceProblem {
                target,
                x: ds.x.view(),
                y: ds.y.view(),
                eligible: Some(ds.d.column(0).iter().map(|&v| v == 0.0).collect()),
            },
        }
    }

    fn is_eligible(&self, i: usize) -> bool {
        self.eligible.as_ref().is_none_or(|e| e[i])
    }
}

/// Cross-validated predictions inside one cross-fitting training set `T_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedFold {
    /// Eligible rows of `T_k`, ascending.
    pub rows: Vec<usize>,
    /// Zero-based sub-fold `v(i)` of each entry of `rows`.
    pub sub_fold: Vec<usize>,
    /// `rows.len() x J`: learner `j` trained on `T_k \ T_{k,v(i)}`.
    pub preds: Array2<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedPredictions {
    pub v: usize,
    /// One entry per cross-fitting fold `k`.
    pub folds: Vec<NestedFold>,
}

/// Out-of-fold candidate predictions for one nuisance target.
#[derive(Debug, Clone)]
pub struct CrossFitMatrix {
    pub target: Target,
    /// n x J out-of-fold predictions.
    pub preds: Array2<f64>,
    pub learner_names: Vec<String>,
    pub folds: FoldAssignment,
    pub nested: Option<NestedPredictions>,
    /// Target values the learners were trained on.
    pub y: Array1<f64>,
    pub eligible: Option<Vec<bool>>,
    /// Out-of-fold mean squared prediction error per learner, over eligible rows.
    pub mspe: Vec<f64>,
    /// Number of candidate-learner fits performed.
    pub fit_count: usize,
    pub elapsed_plain: Duration,
    pub elapsed_nested: Duration,
}

impl CrossFitMatrix {
    pub fn n_learners(&self) -> usize {
        self.preds.ncols()
    }

    /// Indices of rows used to fit stacking weights.
    pub fn eligible_rows(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&i| self.eligible.as_ref().is_none_or(|e| e[i])).collect()
    }

    /// Write `row_id, fold, <learner names...>` (1-based ids and folds).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row_id".to_string(), "fold".to_string()];
        header.extend(self.learner_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.preds.nrows() {
            let mut rec = vec![(i + 1).to_string(), (self.folds.fold_of[i] + 1).to_string()];
            rec.extend(self.preds.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> DdmlError {
    DdmlError::data(format!("csv write failed: {e}"))
}

struct FitTask {
    fold: usize,
    /// `None` for the plain `T_k` fit.
    sub_fold: Option<usize>,
    learner: usize,
    train: Vec<usize>,
    predict: Vec<usize>,
}

fn run_task(
    problem: &NuisanceProblem<'_>,
    learners: &[LearnerSpec],
    seed: u64,
    task: &FitTask,
) -> Result<Array1<f64>> {
    let spec = &learners[task.learner];
    let label = task.sub_fold.map_or(0, |v| v as u64 + 1);
    let learner_seed = derive_path(
        spec.seed_stream,
        &[seed, STREAM_LEARNER, task.fold as u64, label, task.learner as u64],
    );
    let seeded = spec.clone().with_seed(learner_seed);
    let xt = problem.x.select(Axis(0), &task.train);
    let yt = problem.y.select(Axis(0), &task.train);
    let xp = problem.x.select(Axis(0), &task.predict);
    seeded
        .fit(xt.view(), yt.view())
        .and_then(|m| m.predict(xp.view()))
        .map_err(|e| DdmlError::LearnerFit { learner: spec.name.clone(), fold: task.fold + 1, source: Box::new(e) })
}

/// Cross-fit every learner for one nuisance target.
///
/// With `nested_folds = Some(v)`, also computes the `K x V` nested
/// cross-validated predictions. Each (fold, sub-fold, learner) fit draws
/// from its own pre-assigned RNG stream, so output is independent of
/// scheduling.
pub fn cross_fit(
    problem: &NuisanceProblem<'_>,
    learners: &[LearnerSpec],
    folds: &FoldAssignment,
    nested_folds: Option<usize>,
    seed: u64,
) -> Result<CrossFitMatrix> {
    let n = problem.y.len();
    if learners.is_empty() {
        return Err(DdmlError::config("at least one candidate learner is required"));
    }
    if problem.x.nrows() != n || folds.n != n {
        return Err(DdmlError::Shape { expected: n, got: problem.x.nrows().min(folds.n) });
    }
    if let Some(v) = nested_folds {
        if v < 2 {
            return Err(DdmlError::config(format!("nested cross-validation needs V >= 2, got {v}")));
        }
    }
    let j_count = learners.len();

    let mut plain_tasks = Vec::with_capacity(folds.k * j_count);
    let mut fold_train = Vec::with_capacity(folds.k);
    for k in 0..folds.k {
        let (train_all, test) = folds.split(k);
        let train: Vec<usize> = train_all.into_iter().filter(|&i| problem.is_eligible(i)).collect();
        if train.len() < 2 {
            return Err(DdmlError::data(format!(
                "fold {}: only {} eligible training rows for target {}",
                k + 1,
                train.len(),
                problem.target.label()
            )));
        }
        for j in 0..j_count {
            plain_tasks.push(FitTask { fold: k, sub_fold: None, learner: j, train: train.clone(), predict: test.clone() });
        }
        fold_train.push(train);
    }

    let start = Instant::now();
    let plain: Vec<Array1<f64>> = plain_tasks
        .par_iter()
        .map(|t| run_task(problem, learners, seed, t))
        .collect::<Result<_>>()?;
    let elapsed_plain = start.elapsed();
    let mut preds = Array2::zeros((n, j_count));
    for (task, p) in plain_tasks.iter().zip(plain) {
        for (&i, &v) in task.predict.iter().zip(p.iter()) {
            preds[[i, task.learner]] = v;
        }
    }
    let mut fit_count = plain_tasks.len();

    let mut elapsed_nested = Duration::ZERO;
    let nested = match nested_folds {
        None => None,
        Some(v) => {
            let mut layouts = Vec::with_capacity(folds.k);
            let mut tasks = Vec::new();
            for (k, rows) in fold_train.iter().enumerate() {
                if rows.len() < v {
                    return Err(DdmlError::config(format!(
                        "fold {}: {} training rows cannot be split into V={v} sub-folds",
                        k + 1,
                        rows.len()
                    )));
                }
                let sub = make_folds(rows.len(), v, derive_path(seed, &[STREAM_NESTED, k as u64]))?;
                for s in 0..v {
                    let (tr, te) = sub.split(s);
                    let train: Vec<usize> = tr.iter().map(|&p| rows[p]).collect();
                    let predict: Vec<usize> = te.iter().map(|&p| rows[p]).collect();
                    for j in 0..j_count {
                        tasks.push(FitTask { fold: k, sub_fold: Some(s), learner: j, train: train.clone(), predict: predict.clone() });
                    }
                }
                layouts.push(sub);
            }
            let start = Instant::now();
            let results: Vec<Array1<f64>> = tasks
                .par_iter()
                .map(|t| run_task(problem, learners, seed, t))
                .collect::<Result<_>>()?;
            elapsed_nested = start.elapsed();
            fit_count += tasks.len();

            let mut nested_folds_out: Vec<NestedFold> = fold_train
                .iter()
                .zip(&layouts)
                .map(|(rows, sub)| NestedFold {
                    rows: rows.clone(),
                    sub_fold: sub.fold_of.clone(),
                    preds: Array2::zeros((rows.len(), j_count)),
                })
                .collect();
            for (task, p) in tasks.iter().zip(results) {
                let nf = &mut nested_folds_out[task.fold];
                for (&i, &val) in task.predict.iter().zip(p.iter()) {
                    let pos = nf.rows.binary_search(&i).expect("row belongs to T_k");
                    nf.preds[[pos, task.learner]] = val;
                }
            }
            Some(NestedPredictions { v, folds: nested_folds_out })
        }
    };

    let eligible_rows: Vec<usize> = (0..n).filter(|&i| problem.is_eligible(i)).collect();
    let mspe = (0..j_count)
        .map(|j| {
            eligible_rows.iter().map(|&i| (problem.y[i] - preds[[i, j]]).powi(2)).sum::<f64>()
                / eligible_rows.len().max(1) as f64
        })
        .collect();

    Ok(CrossFitMatrix {
        target: problem.target,
        preds,
        learner_names: learners.iter().map(|l| l.name.clone()).collect(),
        folds: folds.clone(),
        nested,
        y: problem.y.to_owned(),
        eligible: problem.eligible.clone(),
        mspe,
        fit_count,
        elapsed_plain,
        elapsed_nested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{BoostingParams, LearnerKind, Truth};
    use ndarray::array;
    use proptest::prelude::*;

    fn mean_learner() -> LearnerSpec {
        LearnerSpec::new(
            "mean",
            LearnerKind::GradientBoosting(BoostingParams { n_trees: 0, ..BoostingParams::default() }),
        )
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(make_folds(10, 5, 1).unwrap().sizes(), vec![2; 5]);
        let s = make_folds(11, 5, 1).unwrap().sizes();
        assert_eq!(s, vec![3, 2, 2, 2, 2]);
        let s = make_folds(9915, 2, 3).unwrap().sizes();
        assert_eq!(s, vec![4958, 4957]);
    }

    #[test]
    fn fold_errors() {
        assert_eq!(make_folds(3, 4, 0).unwrap_err().exit_code(), 2);
        assert_eq!(make_folds(3, 1, 0).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn repeat_plan_contract() {
        assert_eq!(repeat_plan(1, 42), vec![42]);
        let a = repeat_plan(10, 42);
        assert_eq!(a, repeat_plan(10, 42));
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 10);
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Array1<f64> = (0..100).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let f = make_stratified_folds(labels.view(), 5, 3).unwrap();
        for k in 0..5 {
            let treated = f.members(k).iter().filter(|&&i| labels[i] == 1.0).count();
            assert_eq!(treated, 2);
        }
        let sizes = f.sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn constant_learner_hand_computed() {
        let x = array![[0.0], [0.0], [0.0], [0.0]];
        let y = array![0.0, 0.0, 2.0, 2.0];
        let folds = FoldAssignment { n: 4, k: 2, fold_of: vec![0, 0, 1, 1], seed: 0 };
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let cfm = cross_fit(&problem, &[mean_learner()], &folds, None, 1).unwrap();
        assert_eq!(cfm.preds.column(0).to_vec(), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(cfm.mspe, vec![4.0]);
    }

    #[test]
    fn oracle_column_equals_truth() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| (i * (j + 1)) as f64 / 10.0);
        let y = Array1::zeros(30);
        let truth = Truth::new("sum", |r: ArrayView1<f64>| r.sum());
        let folds = make_folds(30, 3, 5).unwrap();
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let cfm = cross_fit(&problem, &[LearnerSpec::oracle(truth)], &folds, None, 1).unwrap();
        for i in 0..30 {
            assert_eq!(cfm.preds[[i, 0]], x.row(i).sum());
        }
    }

    #[test]
    fn fit_counts_for_nested_and_plain() {
        let n = 100;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let y = x.column(0).to_owned();
        let learners: Vec<LearnerSpec> = (0..10).map(|_| mean_learner()).collect();
        let folds = make_folds(n, 5, 1).unwrap();
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let plain = cross_fit(&problem, &learners, &folds, None, 1).unwrap();
        assert_eq!(plain.fit_count, 5 * 10);
        let nested = cross_fit(&problem, &learners, &folds, Some(5), 1).unwrap();
        assert_eq!(nested.fit_count, 5 * 5 * 10 + 5 * 10);
        assert_eq!(nested.preds, plain.preds);
        let nf = nested.nested.as_ref().unwrap();
        for (k, f) in nf.folds.iter().enumerate() {
            assert!(f.rows.iter().all(|&i| folds.fold_of[i] != k));
            assert_eq!(f.rows.len(), 80);
        }
    }

    #[test]
    fn nested_predictions_use_only_sub_training_rows() {
        // the mean learner's nested prediction for row i must equal the mean
        // of y over T_k minus i's sub-fold
        let n = 40;
        let x = Array2::zeros((n, 1));
        let y: Array1<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let folds = make_folds(n, 4, 2).unwrap();
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let cfm = cross_fit(&problem, &[mean_learner()], &folds, Some(3), 9).unwrap();
        for f in &cfm.nested.as_ref().unwrap().folds {
            for (pos, &i) in f.rows.iter().enumerate() {
                let train: Vec<usize> =
                    f.rows.iter().zip(&f.sub_fold).filter(|(_, &s)| s != f.sub_fold[pos]).map(|(&r, _)| r).collect();
                let m = train.iter().map(|&r| y[r]).sum::<f64>() / train.len() as f64;
                assert!((f.preds[[pos, 0]] - m).abs() < 1e-9, "row {i}");
            }
        }
    }

    #[test]
    fn fold_model_is_invariant_to_held_out_rows() {
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] - r[1] + 0.5 * r[2]).collect();
        let folds = make_folds(n, 3, 4).unwrap();
        let learners = [LearnerSpec::lasso(), LearnerSpec::rf_low(), LearnerSpec::ols()];
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let base = cross_fit(&problem, &learners, &folds, None, 7).unwrap();
        // perturb fold-0 rows' outcomes: predictions for other folds may
        // change, fold-0's own out-of-fold predictions may not
        let mut y2 = y.clone();
        for i in folds.members(0) {
            y2[i] += 100.0;
        }
        let problem2 = NuisanceProblem { target: Target::Ell, x: x.view(), y: y2.view(), eligible: None };
        let pert = cross_fit(&problem2, &learners, &folds, None, 7).unwrap();
        for i in folds.members(0) {
            assert_eq!(base.preds.row(i), pert.preds.row(i));
        }
        assert!(folds.members(1).iter().any(|&i| base.preds.row(i) != pert.preds.row(i)));
    }

    #[test]
    fn ineligible_rows_are_not_trained_on_but_predicted() {
        let x = Array2::zeros((16, 1));
        let y: Array1<f64> = (0..16).map(|i| if i < 8 { 1.0 } else { 50.0 }).collect();
        let eligible: Vec<bool> = (0..16).map(|i| i < 8).collect();
        let folds = FoldAssignment { n: 16, k: 2, fold_of: (0..16).map(|i| i % 2).collect(), seed: 0 };
        let problem = NuisanceProblem { target: Target::G0, x: x.view(), y: y.view(), eligible: Some(eligible) };
        let cfm = cross_fit(&problem, &[mean_learner()], &folds, Some(2), 1).unwrap();
        assert!(cfm.preds.iter().all(|&p| p == 1.0));
        assert_eq!(cfm.mspe, vec![0.0]);
        assert_eq!(cfm.eligible_rows(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn learner_failure_names_fold_and_learner() {
        let x = Array2::zeros((10, 1));
        let y: Array1<f64> = (0..10).map(|i| i as f64).collect();
        let folds = make_folds(10, 2, 1).unwrap();
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let err = cross_fit(&problem, &[LearnerSpec::logistic()], &folds, None, 1).unwrap_err();
        match err {
            DdmlError::LearnerFit { learner, .. } => assert_eq!(learner, "logistic"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_dump_layout() {
        let x = Array2::zeros((4, 1));
        let y = array![0.0, 0.0, 2.0, 2.0];
        let folds = FoldAssignment { n: 4, k: 2, fold_of: vec![0, 0, 1, 1], seed: 0 };
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        let cfm = cross_fit(&problem, &[mean_learner()], &folds, None, 1).unwrap();
        let mut buf = Vec::new();
        cfm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row_id,fold,mean");
        assert_eq!(lines[1], "1,1,2.0");
        assert_eq!(lines[4], "4,2,0.0");
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = make_folds(n, k, seed).unwrap();
            prop_assert_eq!(f.fold_of.len(), n);
            prop_assert!(f.fold_of.iter().all(|&x| x < k));
            let sizes = f.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert_eq!(&f, &make_folds(n, k, seed).unwrap());
        }
    }
}
