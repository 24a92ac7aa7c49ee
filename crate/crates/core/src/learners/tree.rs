//! CART regression trees with variance-reduction splits.
//!
//! Rows are presorted once per feature; each node owns a contiguous range in
//! every feature's sorted order, which is stably partitioned on split. Ties
//! between candidate splits go to the lowest feature index and then the
//! lowest threshold.

use ndarray::{Array1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub(super) struct TreeParams {
    pub max_depth: Option<usize>,
    /// Minimum observations in each child of a split.
    pub min_node_size: usize,
    /// Candidate features per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub(super) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ndarray::ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    #[cfg(test)]
    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Sample positions sorted by each feature.
///
/// Position `s` refers to data row `rows[s]`; rows may repeat (bootstrap).
pub(super) struct Presorted {
    rows: Vec<usize>,
    order: Vec<Vec<u32>>,
    /// `values[f][s]` is feature `f` of sample position `s`.
    values: Vec<Vec<f64>>,
}

impl Presorted {
    pub fn new(x: ArrayView2<f64>, rows: Vec<usize>) -> Self {
        let values: Vec<Vec<f64>> =
            (0..x.ncols()).map(|f| rows.iter().map(|&r| x[[r, f]]).collect()).collect();
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { rows, order, values }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
    /// Number of positions going left in the feature's sorted order.
    left_count: usize,
}

/// Grow a tree on `targets` (indexed by sample position).
pub(super) fn build_tree<R: Rng>(
    x: ArrayView2<f64>,
    presorted: &Presorted,
    targets: &[f64],
    params: TreeParams,
    rng: &mut R,
) -> Tree {
    let m = presorted.rows.len();
    let p = x.ncols();
    let mut order = presorted.order.clone();
    let mut goes_left = vec![false; m];
    let mut scratch: Vec<u32> = Vec::with_capacity(m);
    let min_node = params.min_node_size.max(1);
    let n_candidates = params.max_features.unwrap_or(p).clamp(1, p.max(1));

    let mut nodes = vec![Node::Leaf(0.0)];
    // (node id, start, end, depth)
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    while let Some((id, start, end, depth)) = stack.pop() {
        let size = end - start;
        let (sum, sum_sq) = order[0][start..end].iter().fold((0.0, 0.0), |(s, q), &pos| {
            let t = targets[pos as usize];
            (s + t, q + t * t)
        });
        let mean = sum / size as f64;
        nodes[id] = Node::Leaf(mean);

        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        let pure = sum_sq - sum * mean <= 1e-12 * sum_sq.max(1e-300);
        if !depth_ok || size < 2 * min_node || pure || p == 0 {
            continue;
        }

        let mut features: Vec<usize> = if n_candidates < p {
            sample(rng, p, n_candidates).into_vec()
        } else {
            (0..p).collect()
        };
        features.sort_unstable();

        let parent_score = sum * sum / size as f64;
        let mut best: Option<Best> = None;
        for &f in &features {
            let sorted = &order[f][start..end];
            let col = &presorted.values[f];
            let mut left_sum = 0.0;
            for (c, w) in sorted.windows(2).enumerate() {
                let a = w[0] as usize;
                left_sum += targets[a];
                let left_n = c + 1;
                let right_n = size - left_n;
                if left_n < min_node {
                    continue;
                }
                if right_n < min_node {
                    break;
                }
                let xa = col[a];
                let xb = col[w[1] as usize];
                if xa == xb {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64;
                let gain = score - parent_score;
                if gain > best.as_ref().map_or(1e-12 * parent_score.abs().max(1e-300), |b| b.gain) {
                    let mut threshold = xa + (xb - xa) / 2.0;
                    if threshold >= xb {
                        threshold = xa;
                    }
                    best = Some(Best { gain, feature: f, threshold, left_count: left_n });
                }
            }
        }
        let Some(best) = best else { continue };

        for &pos in &order[best.feature][start..end] {
            goes_left[pos as usize] = presorted.values[best.feature][pos as usize] <= best.threshold;
        }
        for list in order.iter_mut() {
            let seg = &mut list[start..end];
            scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let pos = seg[i];
                if goes_left[pos as usize] {
                    seg[w] = pos;
                    w += 1;
                } else {
                    scratch.push(pos);
                }
            }
            seg[w..].copy_from_slice(&scratch);
        }
        let mid = start + best.left_count;
        let left = nodes.len();
        nodes.push(Node::Leaf(0.0));
        let right = nodes.len();
        nodes.push(Node::Leaf(0.0));
        nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        stack.push((right, mid, end, depth + 1));
        stack.push((left, start, mid, depth + 1));
    }
    Tree { nodes }
}
