use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, Presorted, Tree, TreeParams};
use crate::error::{DdmlError, Result};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Predictors considered at each split; `None` means all.
    pub max_features: Option<usize>,
    /// Minimum observations per leaf.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Per-tree sample size as a fraction of the training rows.
    pub subsample_fraction: f64,
    /// Draw the per-tree sample with replacement.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_features: None,
            min_node_size: 1,
            max_depth: None,
            subsample_fraction: 1.0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn low_regularization() -> Self {
        ForestParams {
            n_trees: 200,
            max_features: Some(8),
            min_node_size: 1,
            max_depth: None,
            subsample_fraction: 0.7,
            bootstrap: true,
        }
    }

    pub fn high_regularization() -> Self {
        ForestParams {
            n_trees: 200,
            max_features: Some(5),
            min_node_size: 10,
            max_depth: None,
            subsample_fraction: 0.7,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.nrows());
        for tree in &self.trees {
            out += &tree.predict(x);
        }
        out / self.trees.len() as f64
    }
}

pub(super) fn sample_rows<R: Rng>(n: usize, fraction: f64, bootstrap: bool, rng: &mut R) -> Vec<usize> {
    let m = ((fraction * n as f64).round() as usize).clamp(1, if bootstrap { usize::MAX } else { n });
    if bootstrap {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    } else if m == n {
        (0..n).collect()
    } else {
        let mut rows = sample(rng, n, m).into_vec();
        rows.sort_unstable();
        rows
    }
}

pub(super) fn fit_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(DdmlError::config("random forest needs at least one tree"));
    }
    if !(params.subsample_fraction > 0.0 && params.subsample_fraction.is_finite()) {
        return Err(DdmlError::config("subsample_fraction must be positive"));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_node_size: params.min_node_size,
        max_features: params.max_features,
    };
    let n = x.nrows();
    // one RNG stream per tree so results do not depend on thread count
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(seed, t as u64));
            let rows = sample_rows(n, params.subsample_fraction, params.bootstrap, &mut rng);
            let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            let pre = Presorted::new(x, rows);
            build_tree(x, &pre, &targets, tree_params, &mut rng)
        })
        .collect();
    Ok(Forest { trees })
}
