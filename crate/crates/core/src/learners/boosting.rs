use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forest::sample_rows;
use super::tree::{build_tree, Presorted, Tree, TreeParams};
use crate::error::{DdmlError, Result};
use crate::rng::{derive_seed, rng_from};

/// Squared-loss gradient boosting with shrinkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostingParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_node_size: usize,
    /// Row fraction drawn (without replacement) for each tree.
    pub subsample: f64,
    /// Stop after this many rounds without validation improvement.
    pub early_stopping: Option<usize>,
    /// Held-out share used when early stopping is on.
    pub validation_fraction: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_trees: 500,
            max_depth: 3,
            learning_rate: 0.01,
            min_node_size: 1,
            subsample: 1.0,
            early_stopping: None,
            validation_fraction: 0.1,
        }
    }
}

impl BoostingParams {
    pub fn high_regularization() -> Self {
        BoostingParams { n_trees: 250, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Boosted {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl Boosted {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut f = Array1::from_elem(x.nrows(), self.init);
        for t in &self.trees {
            let step = t.predict(x);
            f.scaled_add(self.learning_rate, &step);
        }
        f
    }

    pub fn trees_used(&self) -> usize {
        self.trees.len()
    }
}

pub(super) fn fit_boosting(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &BoostingParams,
    seed: u64,
) -> Result<Boosted> {
    if !(params.learning_rate >= 0.0 && params.learning_rate.is_finite()) {
        return Err(DdmlError::config("learning_rate must be non-negative"));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(DdmlError::config("subsample must lie in (0, 1]"));
    }
    let n = x.nrows();
    let mut rng = rng_from(derive_seed(seed, 0));

    let (train, valid): (Vec<usize>, Vec<usize>) = match params.early_stopping {
        Some(_) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let n_valid = ((params.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut valid = idx.split_off(n - n_valid);
            idx.sort_unstable();
            valid.sort_unstable();
            (idx, valid)
        }
        None => ((0..n).collect(), Vec::new()),
    };
    let init = train.iter().map(|&r| y[r]).sum::<f64>() / train.len() as f64;
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_node_size: params.min_node_size,
        max_features: None,
    };

    let full_sort = (params.subsample >= 1.0).then(|| Presorted::new(x, train.clone()));
    let mut fitted = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut best_loss = f64::INFINITY;
    let mut best_len = 0;
    let mut since_best = 0;
    for t in 0..params.n_trees {
        let mut tree_rng = rng_from(derive_seed(seed, 1 + t as u64));
        let local;
        let pre = match &full_sort {
            Some(p) => p,
            None => {
                let picks = sample_rows(train.len(), params.subsample, false, &mut tree_rng);
                local = Presorted::new(x, picks.iter().map(|&i| train[i]).collect());
                &local
            }
        };
        let residuals: Vec<f64> = pre.rows().iter().map(|&r| y[r] - fitted[r]).collect();
        let tree = build_tree(x, pre, &residuals, tree_params, &mut tree_rng);
        for r in 0..n {
            fitted[r] += params.learning_rate * tree.predict_row(x.row(r));
        }
        trees.push(tree);

        if let Some(patience) = params.early_stopping {
            let loss = valid.iter().map(|&r| (y[r] - fitted[r]).powi(2)).sum::<f64>();
            if loss < best_loss {
                best_loss = loss;
                best_len = trees.len();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if params.early_stopping.is_some() {
        trees.truncate(best_len);
    }
    Ok(Boosted { init, learning_rate: params.learning_rate, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn boosting_reduces_training_error() {
        let mut rng = rng_from(1);
        let x: Array2<f64> = Array2::from_shape_simple_fn((300, 3), || StandardNormal.sample(&mut rng));
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * r[1] + r[2].abs()).collect();
        let var = y.var(0.0);
        let p = BoostingParams { learning_rate: 0.1, n_trees: 200, ..Default::default() };
        let b = fit_boosting(x.view(), y.view(), &p, 3).unwrap();
        let mse = (&b.predict(x.view()) - &y).mapv(|v| v * v).mean().unwrap();
        assert!(mse < 0.2 * var, "mse {mse} var {var}");
    }

    #[test]
    fn early_stopping_truncates() {
        let mut rng = rng_from(2);
        let x: Array2<f64> = Array2::from_shape_simple_fn((200, 2), || StandardNormal.sample(&mut rng));
        let y: Array1<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = BoostingParams {
            learning_rate: 0.3,
            n_trees: 300,
            early_stopping: Some(10),
            ..Default::default()
        };
        let b = fit_boosting(x.view(), y.view(), &p, 3).unwrap();
        assert!(b.trees_used() < 300);
    }

    #[test]
    fn subsampled_boosting_is_deterministic() {
        let mut rng = rng_from(4);
        let x: Array2<f64> = Array2::from_shape_simple_fn((100, 2), || StandardNormal.sample(&mut rng));
        let y = x.column(0).mapv(|v| v * v);
        let p = BoostingParams { subsample: 0.5, n_trees: 30, ..Default::default() };
        let a = fit_boosting(x.view(), y.view(), &p, 9).unwrap().predict(x.view());
        let b = fit_boosting(x.view(), y.view(), &p, 9).unwrap().predict(x.view());
        assert_eq!(a, b);
    }
}
