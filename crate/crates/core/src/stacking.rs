//! Final learners over candidate predictions and the three stacking
//! variants.
//!
//! * conventional: one weight vector per cross-fitting fold `k`, fitted on
//!   the nested cross-validated predictions inside `T_k`;
//! * short: one weight vector fitted on the out-of-fold predictions;
//! * pooled: one weight vector fitted on the nested predictions of all
//!   folds stacked together.
//!
//! In every variant the stacked prediction for `i` in `I_k` combines the
//! candidates refit on `T_k`, i.e. the plain cross-fitted predictions.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::crossfit::CrossFitMatrix;
use crate::error::{DdmlError, Result};
use crate::linalg::{lstsq, solve_square};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackingMode {
    Conventional,
    Short,
    Pooled,
}

impl StackingMode {
    pub const ALL: [StackingMode; 3] = [StackingMode::Conventional, StackingMode::Short, StackingMode::Pooled];

    pub fn label(&self) -> &'static str {
        match self {
            StackingMode::Conventional => "conventional",
            StackingMode::Short => "short",
            StackingMode::Pooled => "pooled",
        }
    }

    pub fn needs_nested(&self) -> bool {
        !matches!(self, StackingMode::Short)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalLearner {
    /// Least squares on the probability simplex.
    Cls,
    /// Unconstrained least squares without intercept.
    Ols,
    SingleBest,
    Average,
}

impl FinalLearner {
    pub const ALL: [FinalLearner; 4] =
        [FinalLearner::Cls, FinalLearner::Ols, FinalLearner::SingleBest, FinalLearner::Average];

    pub fn label(&self) -> &'static str {
        match self {
            FinalLearner::Cls => "cls",
            FinalLearner::Ols => "ols",
            FinalLearner::SingleBest => "single_best",
            FinalLearner::Average => "average",
        }
    }
}

/// Settings of the projected-gradient CLS solver.
#[derive(Debug, Clone, Copy)]
pub struct ClsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClsOptions {
    fn default() -> Self {
        ClsOptions { tol: 1e-8, max_iter: 10_000 }
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (r, &ur) in u.iter().enumerate() {
        cum += ur;
        let t = (cum - 1.0) / (r + 1) as f64;
        if ur - t > 0.0 {
            tau = t;
        }
    }
    v.mapv(|x| (x - tau).max(0.0))
}

/// `||y - P w||^2`.
pub fn cls_objective(p: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let r = &y - &p.dot(&w);
    r.dot(&r)
}

/// KKT residual of `min w'Qw - 2c'w` over the simplex at `w`.
///
/// With gradient `g = 2(Qw - c)`, active set `A = {w_j > 1e-10}` and
/// `mu = min_{j in A} g_j`, the residual is the largest of
/// `g_j - mu` over `A` and `mu - g_j` over the inactive coordinates.
pub fn kkt_residual(q: ArrayView2<f64>, c: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let g = (q.dot(&w) - c) * 2.0;
    let active: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 1e-10).collect();
    if active.is_empty() {
        return f64::INFINITY;
    }
    let mu = active.iter().map(|&j| g[j]).fold(f64::INFINITY, f64::min);
    (0..w.len())
        .map(|j| if w[j] > 1e-10 { g[j] - mu } else { (mu - g[j]).max(0.0) })
        .fold(0.0, f64::max)
}

fn quad(q: &Array2<f64>, c: &Array1<f64>, w: &Array1<f64>) -> f64 {
    w.dot(&q.dot(w)) - 2.0 * c.dot(w)
}

/// Minimize `||y - P w||^2` over the probability simplex.
///
/// Projected gradient with Armijo backtracking from the uniform start,
/// finished by active-set iterations with exact solves on the support.
/// Duplicate columns receive identical weights.
pub fn cls_solve(p: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    cls_solve_with(p, y, ClsOptions::default())
}

pub fn cls_solve_with(p: ArrayView2<f64>, y: ArrayView1<f64>, opts: ClsOptions) -> Array1<f64> {
    let j = p.ncols();
    if j == 1 {
        return Array1::ones(1);
    }
    let q_raw = p.t().dot(&p);
    let c_raw = p.t().dot(&y);
    let scale = q_raw.diag().iter().chain(c_raw.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let q = q_raw / scale;
    let c = c_raw / scale;
    let lipschitz = 2.0 * q.diag().sum().max(1e-300);

    let mut w = Array1::from_elem(j, 1.0 / j as f64);
    let mut step = 1.0 / lipschitz;
    let mut iter = 0;
    while iter < opts.max_iter {
        iter += 1;
        let g = (q.dot(&w) - &c) * 2.0;
        let pg = &w - &project_simplex((&w - &g).view());
        if pg.dot(&pg).sqrt() < opts.tol {
            break;
        }
        let f = quad(&q, &c, &w);
        loop {
            let next = project_simplex((&w - &(&g * step)).view());
            let d = &next - &w;
            let bound = f + g.dot(&d) + d.dot(&d) / (2.0 * step);
            if quad(&q, &c, &next) <= bound + 1e-15 * f.abs().max(1.0) || step < 1e-30 {
                w = next;
                break;
            }
            step *= 0.5;
        }
        step = (step * 2.0).min(1e6 / lipschitz);
    }
    let refined = refine_active_set(&q, &c, &w);
    if refined.iter().all(|v| v.is_finite() && *v >= 0.0) && quad(&q, &c, &refined) <= quad(&q, &c, &w) + 1e-15 {
        w = refined;
    }
    let total = w.sum();
    w / total
}

/// Minimizer of the quadratic on the affine hull of `support` (sum to one).
/// A singular system (identical columns) falls back to the minimum-norm
/// solution, which shares weight equally between copies.
fn solve_on_support(q: &Array2<f64>, c: &Array1<f64>, support: &[usize]) -> Option<Array1<f64>> {
    let s = support.len();
    // [2Q_S 1; 1' 0] [w; nu] = [2c_S; 1]
    let mut a = Array2::zeros((s + 1, s + 1));
    let mut b = Array1::zeros(s + 1);
    for (r, &jr) in support.iter().enumerate() {
        for (t, &jt) in support.iter().enumerate() {
            a[[r, t]] = 2.0 * q[[jr, jt]];
        }
        a[[r, s]] = 1.0;
        a[[s, r]] = 1.0;
        b[r] = 2.0 * c[jr];
    }
    b[s] = 1.0;
    let sol = match solve_square(a.view(), b.view()) {
        Some(sol) => sol,
        None => lstsq(a.view(), b.view()).ok()?.coef,
    };
    let mut out = Array1::zeros(q.nrows());
    for (r, &j) in support.iter().enumerate() {
        out[j] = sol[r];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Primal active-set iterations from the feasible point `w0`: solve on the
/// support, step back to the boundary when a weight would turn negative,
/// and add the coordinates with the most negative reduced gradient.
fn refine_active_set(q: &Array2<f64>, c: &Array1<f64>, w0: &Array1<f64>) -> Array1<f64> {
    let j = w0.len();
    let mut w = w0.clone();
    let mut support: Vec<usize> = (0..j).filter(|&i| w[i] > 0.0).collect();
    for _ in 0..(8 * j + 16) {
        let Some(v) = solve_on_support(q, c, &support) else { break };
        let blocking: Vec<(usize, f64)> = support
            .iter()
            .filter(|&&i| v[i] < 0.0)
            .map(|&i| (i, w[i] / (w[i] - v[i])))
            .collect();
        if let Some(alpha) = blocking.iter().map(|b| b.1).reduce(f64::min) {
            w = &w + &((&v - &w) * alpha);
            for &(i, ratio) in &blocking {
                if ratio == alpha {
                    w[i] = 0.0;
                }
            }
            w.mapv_inplace(|x| x.max(0.0));
            support.retain(|&i| w[i] > 0.0);
            if support.is_empty() {
                return w0.clone();
            }
            continue;
        }
        w = v;
        let g = (q.dot(&w) - c) * 2.0;
        let mu = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
        let outside: Vec<usize> = (0..j).filter(|i| !support.contains(i)).collect();
        let Some(g_min) = outside.iter().map(|&i| g[i]).reduce(f64::min) else { break };
        if g_min >= mu - 1e-13 {
            break;
        }
        support.extend(outside.into_iter().filter(|&i| g[i] == g_min));
        support.sort_unstable();
    }
    w
}

fn column_mse(p: ArrayView2<f64>, y: ArrayView1<f64>) -> Vec<f64> {
    let n = p.nrows().max(1) as f64;
    p.columns().into_iter().map(|col| (&y - &col).mapv(|e| e * e).sum() / n).collect()
}

/// Weights of `final_learner` for design `p` and target `y`.
pub fn final_learn(final_learner: FinalLearner, p: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let j = p.ncols();
    if j == 0 || p.nrows() == 0 || p.nrows() != y.len() {
        return Err(DdmlError::Shape { expected: y.len(), got: p.nrows() });
    }
    if p.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(DdmlError::numerical("non-finite candidate prediction"));
    }
    Ok(match final_learner {
        FinalLearner::Cls => cls_solve(p, y),
        FinalLearner::Ols => lstsq(p, y)?.coef,
        FinalLearner::SingleBest => {
            let mse = column_mse(p, y);
            let best = (0..j).fold(0, |b, k| if mse[k] < mse[b] { k } else { b });
            let mut w = Array1::zeros(j);
            w[best] = 1.0;
            w
        }
        FinalLearner::Average => Array1::from_elem(j, 1.0 / j as f64),
    })
}

/// Stacking weights for one nuisance target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingWeights {
    pub mode: StackingMode,
    pub final_learner: FinalLearner,
    pub learner_names: Vec<String>,
    /// `K x J` for conventional stacking, `1 x J` otherwise.
    pub weights: Array2<f64>,
    /// Out-of-fold MSPE of each candidate.
    pub mspe: Vec<f64>,
}

impl StackingWeights {
    /// Weights averaged over folds.
    pub fn mean_weights(&self) -> Array1<f64> {
        self.weights.mean_axis(Axis(0)).expect("at least one weight row")
    }

    fn row_for_fold(&self, k: usize) -> ArrayView1<'_, f64> {
        if self.weights.nrows() == 1 {
            self.weights.row(0)
        } else {
            self.weights.row(k)
        }
    }
}

#[derive(Debug, Clone)]
pub struct StackingResult {
    pub weights: StackingWeights,
    /// Stacked out-of-fold prediction for every row.
    pub predictions: Array1<f64>,
}

fn combine(cfm: &CrossFitMatrix, weights: StackingWeights) -> StackingResult {
    let predictions = (0..cfm.preds.nrows())
        .map(|i| cfm.preds.row(i).dot(&weights.row_for_fold(cfm.folds.fold_of[i])))
        .collect();
    StackingResult { weights, predictions }
}

fn nested_or_err(cfm: &CrossFitMatrix, mode: StackingMode) -> Result<&crate::crossfit::NestedPredictions> {
    cfm.nested.as_ref().ok_or_else(|| {
        DdmlError::Contract(format!(
            "{} stacking needs nested cross-validated predictions for target {}",
            mode.label(),
            cfm.target.label()
        ))
    })
}

fn weights_of(cfm: &CrossFitMatrix, mode: StackingMode, final_learner: FinalLearner, w: Array2<f64>) -> StackingWeights {
    StackingWeights { mode, final_learner, learner_names: cfm.learner_names.clone(), weights: w, mspe: cfm.mspe.clone() }
}

pub fn stack_conventional(cfm: &CrossFitMatrix, final_learner: FinalLearner) -> Result<StackingResult> {
    let nested = nested_or_err(cfm, StackingMode::Conventional)?;
    let j = cfm.n_learners();
    let mut w = Array2::zeros((nested.folds.len(), j));
    for (k, nf) in nested.folds.iter().enumerate() {
        let yk = cfm.y.select(Axis(0), &nf.rows);
        w.row_mut(k).assign(&final_learn(final_learner, nf.preds.view(), yk.view())?);
    }
    Ok(combine(cfm, weights_of(cfm, StackingMode::Conventional, final_learner, w)))
}

pub fn stack_short(cfm: &CrossFitMatrix, final_learner: FinalLearner) -> Result<StackingResult> {
    let rows = cfm.eligible_rows();
    let p = cfm.preds.select(Axis(0), &rows);
    let y = cfm.y.select(Axis(0), &rows);
    let w = final_learn(final_learner, p.view(), y.view())?.insert_axis(Axis(0));
    Ok(combine(cfm, weights_of(cfm, StackingMode::Short, final_learner, w)))
}

pub fn stack_pooled(cfm: &CrossFitMatrix, final_learner: FinalLearner) -> Result<StackingResult> {
    let nested = nested_or_err(cfm, StackingMode::Pooled)?;
    let views: Vec<ArrayView2<f64>> = nested.folds.iter().map(|nf| nf.preds.view()).collect();
    let p = concatenate(Axis(0), &views).map_err(|e| DdmlError::Contract(e.to_string()))?;
    let y: Array1<f64> = nested.folds.iter().flat_map(|nf| nf.rows.iter().map(|&i| cfm.y[i])).collect();
    let w = final_learn(final_learner, p.view(), y.view())?.insert_axis(Axis(0));
    Ok(combine(cfm, weights_of(cfm, StackingMode::Pooled, final_learner, w)))
}

pub fn stack(cfm: &CrossFitMatrix, mode: StackingMode, final_learner: FinalLearner) -> Result<StackingResult> {
    match mode {
        StackingMode::Conventional => stack_conventional(cfm, final_learner),
        StackingMode::Short => stack_short(cfm, final_learner),
        StackingMode::Pooled => stack_pooled(cfm, final_learner),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::{cross_fit, make_folds, NuisanceProblem, Target};
    use crate::learners::{LearnerSpec, Truth};
    use crate::rng::rng_from;
    use ndarray::array;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(seed: u64, n: usize, j: usize) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rng_from(seed);
        let p: Array2<f64> = Array2::from_shape_simple_fn((n, j), || StandardNormal.sample(&mut rng));
        let y: Array1<f64> = Array1::from_shape_simple_fn(n, || StandardNormal.sample(&mut rng));
        (p, y)
    }

    /// Objective minimum over the simplex grid with step 1/steps.
    fn grid_oracle(p: ArrayView2<f64>, y: ArrayView1<f64>, steps: usize) -> f64 {
        let j = p.ncols();
        let mut best = f64::INFINITY;
        let mut w = vec![0usize; j];
        fn rec(pos: usize, left: usize, w: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if pos == w.len() - 1 {
                w[pos] = left;
                f(w);
                return;
            }
            for a in 0..=left {
                w[pos] = a;
                rec(pos + 1, left - a, w, f);
            }
        }
        rec(0, steps, &mut w, &mut |w| {
            let wv: Array1<f64> = w.iter().map(|&a| a as f64 / steps as f64).collect();
            best = best.min(cls_objective(p, y, wv.view()));
        });
        best
    }

    #[test]
    fn projection_lands_on_simplex() {
        let w = project_simplex(array![0.3, -2.0, 5.0, 0.1].view());
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert_eq!(w, array![0.0, 0.0, 1.0, 0.0]);
        let w = project_simplex(array![0.2, 0.3, 0.5].view());
        assert!((&w - &array![0.2, 0.3, 0.5]).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn single_column_is_the_point_simplex() {
        let (p, y) = random_instance(1, 10, 1);
        assert_eq!(cls_solve(p.view(), y.view()), array![1.0]);
    }

    #[test]
    fn perfect_column_gets_all_weight() {
        let (_, y) = random_instance(2, 30, 1);
        let mut p = Array2::zeros((30, 2));
        p.column_mut(0).assign(&y);
        let w = cls_solve(p.view(), y.view());
        assert!((w[0] - 1.0).abs() < 1e-10 && w[1].abs() < 1e-10, "{w}");
        assert!(cls_objective(p.view(), y.view(), w.view()) <= grid_oracle(p.view(), y.view(), 1000) + 1e-9);
    }

    #[test]
    fn matches_grid_oracle_on_small_instances() {
        for seed in 0..20 {
            let j = 2 + (seed as usize % 2);
            let (p, y) = random_instance(100 + seed, 50, j);
            let w = cls_solve(p.view(), y.view());
            let f = cls_objective(p.view(), y.view(), w.view());
            let oracle = grid_oracle(p.view(), y.view(), if j == 2 { 1000 } else { 400 });
            assert!(f <= oracle + 1e-6 * (1.0 + oracle.abs()), "seed {seed}: {f} > {oracle}");
            let q = p.t().dot(&p);
            let c = p.t().dot(&y);
            assert!(kkt_residual(q.view(), c.view(), w.view()) < 1e-6);
        }
    }

    #[test]
    fn duplicate_columns_split_evenly_and_deterministically() {
        let (p1, y) = random_instance(3, 40, 1);
        let p = concatenate![Axis(1), p1, p1];
        let a = cls_solve(p.view(), y.view());
        let b = cls_solve(p.view(), y.view());
        assert_eq!(a, b);
        assert!((a[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn final_learner_examples() {
        let y = array![0.0, 0.0, 0.0, 0.0];
        let p = Array2::from_shape_vec((4, 3), vec![
            0.5f64.sqrt(), 0.3f64.sqrt(), 0.9f64.sqrt(),
            0.5f64.sqrt(), 0.3f64.sqrt(), 0.9f64.sqrt(),
            -(0.5f64.sqrt()), -(0.3f64.sqrt()), -(0.9f64.sqrt()),
            -(0.5f64.sqrt()), -(0.3f64.sqrt()), -(0.9f64.sqrt()),
        ]).unwrap();
        assert_eq!(final_learn(FinalLearner::SingleBest, p.view(), y.view()).unwrap(), array![0.0, 1.0, 0.0]);
        let p4 = Array2::ones((3, 4));
        assert_eq!(final_learn(FinalLearner::Average, p4.view(), array![1.0, 1.0, 1.0].view()).unwrap(), array![0.25, 0.25, 0.25, 0.25]);
        // orthonormal columns: w = P'y
        let s = 0.5f64.sqrt();
        let q = array![[s, s], [s, -s], [0.0, 0.0]];
        let yy = array![1.0, 3.0, 2.0];
        let w = final_learn(FinalLearner::Ols, q.view(), yy.view()).unwrap();
        let expect = q.t().dot(&yy);
        assert!((&w - &expect).iter().all(|d| d.abs() < 1e-12));
        assert!(w[1] < 0.0);
    }

    #[test]
    fn single_best_ties_go_to_lowest_index() {
        let p = array![[1.0, 1.0], [2.0, 2.0]];
        let w = final_learn(FinalLearner::SingleBest, p.view(), array![0.0, 0.0].view()).unwrap();
        assert_eq!(w, array![1.0, 0.0]);
    }

    fn oracle_and_zero() -> (CrossFitMatrix, Array1<f64>) {
        let mut rng = rng_from(5);
        let n = 60;
        let x: Array2<f64> = Array2::from_shape_simple_fn((n, 2), || StandardNormal.sample(&mut rng));
        let truth: Array1<f64> = x.rows().into_iter().map(|r| r[0] + 2.0 * r[1]).collect();
        let y = truth.clone();
        let learners = vec![
            LearnerSpec::oracle(Truth::new("truth", |r| r[0] + 2.0 * r[1])),
            LearnerSpec::oracle(Truth::new("zero", |_| 0.0)),
        ];
        let folds = make_folds(n, 3, 9).unwrap();
        let problem = NuisanceProblem { target: Target::Ell, x: x.view(), y: y.view(), eligible: None };
        (cross_fit(&problem, &learners, &folds, Some(3), 9).unwrap(), truth)
    }

    #[test]
    fn oracle_learner_wins_in_every_variant() {
        let (cfm, truth) = oracle_and_zero();
        for mode in StackingMode::ALL {
            let res = stack(&cfm, mode, FinalLearner::Cls).unwrap();
            for row in res.weights.weights.rows() {
                assert!((row[0] - 1.0).abs() < 1e-10 && row[1].abs() < 1e-10, "{mode:?}: {row}");
            }
            assert!((&res.predictions - &truth).iter().all(|d| d.abs() < 1e-8));
        }
        assert_eq!(stack(&cfm, StackingMode::Conventional, FinalLearner::Cls).unwrap().weights.weights.nrows(), 3);
    }

    #[test]
    fn nested_variants_require_nested_predictions() {
        let (mut cfm, _) = oracle_and_zero();
        cfm.nested = None;
        assert!(matches!(stack_conventional(&cfm, FinalLearner::Cls), Err(DdmlError::Contract(_))));
        assert!(matches!(stack_pooled(&cfm, FinalLearner::Cls), Err(DdmlError::Contract(_))));
        assert!(stack_short(&cfm, FinalLearner::Cls).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cls_is_feasible_dominant_and_equivariant(seed in 0u64..10_000, j in 1usize..6, n in 3usize..40) {
            let (p, y) = random_instance(seed, n, j);
            let w = cls_solve(p.view(), y.view());
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.sum() - 1.0).abs() < 1e-8);
            let f = cls_objective(p.view(), y.view(), w.view());
            let tol = 1e-9 * (1.0 + f.abs());
            for k in 0..j {
                let mut e = Array1::zeros(j);
                e[k] = 1.0;
                prop_assert!(f <= cls_objective(p.view(), y.view(), e.view()) + tol);
            }
            let avg = Array1::from_elem(j, 1.0 / j as f64);
            prop_assert!(f <= cls_objective(p.view(), y.view(), avg.view()) + tol);

            // reversing the learner order reverses the weights
            let rev: Vec<usize> = (0..j).rev().collect();
            let pr = p.select(Axis(1), &rev);
            let wr = cls_solve(pr.view(), y.view());
            let fr = cls_objective(pr.view(), y.view(), wr.view());
            prop_assert!((f - fr).abs() <= 1e-8 * (1.0 + f.abs()));
            let pred = p.dot(&w);
            let pred_r = pr.dot(&wr);
            let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!((&pred - &pred_r).iter().all(|d| d.abs() < 1e-5 * scale));
        }
    }
}
