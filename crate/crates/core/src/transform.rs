//! Deterministic covariate expansions: standardization, polynomial and
//! interaction terms, and B-spline bases.
//!
//! A [`TransformPlan`] is fitted once on training rows and then applied
//! unchanged to any other rows. Nothing is re-estimated at apply time.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{DdmlError, Result};
use crate::linalg::column_moments;

/// One step of a transform pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TransformStep {
    /// Center to mean zero and scale to unit variance. Constant columns are
    /// centered but left unscaled.
    Standardize,
    /// Powers up to `order`. With `interactions`, every monomial of total
    /// degree `1..=order` (so order 2 gives levels, squares and pairwise
    /// products).
    Polynomial {
        order: usize,
        #[serde(default)]
        interactions: bool,
    },
    /// Original columns followed by every pairwise product `x_i * x_j`, i < j.
    TwoWayInteractions,
    /// B-spline basis per column with interior knots at training quantiles.
    /// With `interact`, pairwise products of the input columns are appended.
    Spline {
        knots: usize,
        degree: usize,
        #[serde(default)]
        interact: bool,
    },
}

impl TransformStep {
    /// Levels, squares and pairwise interactions.
    pub fn poly2_interactions() -> Self {
        TransformStep::Polynomial { order: 2, interactions: true }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TransformStep::Polynomial { order: 0, .. } => {
                Err(DdmlError::config("polynomial order must be at least 1"))
            }
            TransformStep::Spline { degree: 0, .. } => {
                Err(DdmlError::config("spline degree must be at least 1"))
            }
            TransformStep::Spline { knots: 0, .. } => {
                Err(DdmlError::config("spline needs at least one interior knot"))
            }
            _ => Ok(()),
        }
    }

    /// Output column count for `p` input columns.
    pub fn output_columns(&self, p: usize) -> usize {
        match *self {
            TransformStep::Standardize => p,
            TransformStep::Polynomial { order, interactions: false } => p * order,
            TransformStep::Polynomial { order, interactions: true } => monomials(p, order).len(),
            TransformStep::TwoWayInteractions => p + p * p.saturating_sub(1) / 2,
            TransformStep::Spline { knots, degree, interact } => {
                p * (knots + degree) + if interact { p * p.saturating_sub(1) / 2 } else { 0 }
            }
        }
    }
}

/// Sparse monomial: list of (column, power).
type Monomial = Vec<(usize, u32)>;

/// All monomials of total degree 1..=order over `p` columns, ordered by
/// degree and then lexicographically by column multiset.
fn monomials(p: usize, order: usize) -> Vec<Monomial> {
    fn rec(start: usize, p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for c in start..p {
            cur.push(c);
            rec(c, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 1..=order {
        let mut multisets = Vec::new();
        rec(0, p, deg, &mut Vec::new(), &mut multisets);
        for ms in multisets {
            let mut mono: Monomial = Vec::new();
            for c in ms {
                match mono.last_mut() {
                    Some((col, pw)) if *col == c => *pw += 1,
                    _ => mono.push((c, 1)),
                }
            }
            out.push(mono);
        }
    }
    out
}

fn pure_powers(p: usize, order: usize) -> Vec<Monomial> {
    (1..=order as u32).flat_map(|pw| (0..p).map(move |c| vec![(c, pw)])).collect()
}

fn pairwise(p: usize) -> Vec<Monomial> {
    let mut out: Vec<Monomial> = (0..p).map(|c| vec![(c, 1)]).collect();
    for i in 0..p {
        for j in i + 1..p {
            out.push(vec![(i, 1), (j, 1)]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplineBasis {
    /// Full clamped knot vector.
    knots: Vec<f64>,
    degree: usize,
    lo: f64,
    hi: f64,
}

impl SplineBasis {
    fn fit(col: ArrayView1<f64>, interior: usize, degree: usize) -> Self {
        let mut sorted: Vec<f64> = col.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let mut knots = vec![lo; degree + 1];
        for l in 1..=interior {
            let q = l as f64 / (interior + 1) as f64;
            knots.push(quantile_sorted(&sorted, q));
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        SplineBasis { knots, degree, lo, hi }
    }

    fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Basis values at `x` (clamped to the training range), dropping the
    /// first function so the columns do not sum to a constant.
    fn eval(&self, x: f64, out: &mut Vec<f64>) {
        let nb = self.n_basis();
        if self.hi <= self.lo {
            out.extend(std::iter::repeat_n(0.0, nb - 1));
            return;
        }
        let x = x.clamp(self.lo, self.hi);
        let t = &self.knots;
        // degree-0 indicators; the right boundary belongs to the last
        // non-empty span
        let last_span = (0..t.len() - 1).rev().find(|&i| t[i] < t[i + 1]).unwrap();
        let mut b: Vec<f64> = (0..t.len() - 1)
            .map(|i| {
                let inside = (t[i] <= x && x < t[i + 1]) || (i == last_span && x == t[i + 1]);
                if inside { 1.0 } else { 0.0 }
            })
            .collect();
        for d in 1..=self.degree {
            let next: Vec<f64> = (0..t.len() - 1 - d)
                .map(|i| {
                    let left = if t[i + d] > t[i] { (x - t[i]) / (t[i + d] - t[i]) * b[i] } else { 0.0 };
                    let right = if t[i + d + 1] > t[i + 1] {
                        (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * b[i + 1]
                    } else {
                        0.0
                    };
                    left + right
                })
                .collect();
            b = next;
        }
        out.extend_from_slice(&b[1..nb]);
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FittedStep {
    Standardize { mean: Array1<f64>, scale: Array1<f64> },
    Monomials { terms: Vec<Monomial> },
    Spline { bases: Vec<SplineBasis>, interact: bool },
}

/// A fitted transform pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformPlan {
    steps: Vec<FittedStep>,
    input_columns: usize,
    output_columns: usize,
    /// Indices (in the input of the standardize step) of constant columns
    /// that were passed through unscaled.
    pub unscaled_constant_columns: Vec<usize>,
}

impl TransformPlan {
    pub fn input_columns(&self) -> usize {
        self.input_columns
    }

    pub fn output_columns(&self) -> usize {
        self.output_columns
    }
}

/// Fit a transform pipeline on training rows.
pub fn fit_transform(steps: &[TransformStep], x_train: ArrayView2<f64>) -> Result<TransformPlan> {
    for s in steps {
        s.validate()?;
    }
    let input_columns = x_train.ncols();
    let mut current = x_train.to_owned();
    let mut fitted = Vec::with_capacity(steps.len());
    let mut constant = Vec::new();
    for step in steps {
        let p = current.ncols();
        let f = match *step {
            TransformStep::Standardize => {
                let (mean, sd) = column_moments(current.view());
                let mut scale = sd.clone();
                for (j, s) in scale.iter_mut().enumerate() {
                    if *s <= 1e-12 * (1.0 + mean[j].abs()) {
                        constant.push(j);
                        *s = 1.0;
                    }
                }
                FittedStep::Standardize { mean, scale }
            }
            TransformStep::Polynomial { order, interactions } => FittedStep::Monomials {
                terms: if interactions { monomials(p, order) } else { pure_powers(p, order) },
            },
            TransformStep::TwoWayInteractions => FittedStep::Monomials { terms: pairwise(p) },
            TransformStep::Spline { knots, degree, interact } => FittedStep::Spline {
                bases: current
                    .columns()
                    .into_iter()
                    .map(|c| SplineBasis::fit(c, knots, degree))
                    .collect(),
                interact,
            },
        };
        current = apply_step(&f, current.view());
        fitted.push(f);
    }
    if !constant.is_empty() {
        log::warn!("standardize: {} constant column(s) left unscaled", constant.len());
    }
    Ok(TransformPlan {
        steps: fitted,
        input_columns,
        output_columns: current.ncols(),
        unscaled_constant_columns: constant,
    })
}

/// Apply a fitted plan to new rows.
pub fn apply_transform(plan: &TransformPlan, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != plan.input_columns {
        return Err(DdmlError::Shape { expected: plan.input_columns, got: x.ncols() });
    }
    let mut current = x.to_owned();
    for step in &plan.steps {
        current = apply_step(step, current.view());
    }
    Ok(current)
}

fn apply_step(step: &FittedStep, x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    match step {
        FittedStep::Standardize { mean, scale } => {
            let mut out = x.to_owned();
            for mut row in out.rows_mut() {
                for j in 0..row.len() {
                    row[j] = (row[j] - mean[j]) / scale[j];
                }
            }
            out
        }
        FittedStep::Monomials { terms } => {
            let mut out = Array2::zeros((n, terms.len()));
            for (i, row) in x.rows().into_iter().enumerate() {
                for (t, mono) in terms.iter().enumerate() {
                    out[[i, t]] = mono.iter().map(|&(c, pw)| row[c].powi(pw as i32)).product();
                }
            }
            out
        }
        FittedStep::Spline { bases, interact } => {
            let p = x.ncols();
            let pairs = if *interact { p * p.saturating_sub(1) / 2 } else { 0 };
            let width: usize = bases.iter().map(|b| b.n_basis() - 1).sum::<usize>() + pairs;
            let mut buf = Vec::with_capacity(n * width);
            for row in x.rows() {
                for (c, b) in bases.iter().enumerate() {
                    b.eval(row[c], &mut buf);
                }
                if *interact {
                    for i in 0..p {
                        for j in i + 1..p {
                            buf.push(row[i] * row[j]);
                        }
                    }
                }
            }
            Array2::from_shape_vec((n, width), buf).expect("spline buffer")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Brute-force count of exponent vectors with total degree in 1..=k.
    fn brute_monomials(p: usize, k: usize) -> usize {
        let mut count = 0;
        let mut e = vec![0usize; p];
        loop {
            let s: usize = e.iter().sum();
            if (1..=k).contains(&s) {
                count += 1;
            }
            let mut i = 0;
            loop {
                if i == p {
                    return count;
                }
                e[i] += 1;
                if e[i] <= k {
                    break;
                }
                e[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn poly2_interactions_two_columns() {
        let x = array![[2.0, 3.0], [1.0, -1.0]];
        let plan = fit_transform(&[TransformStep::poly2_interactions()], x.view()).unwrap();
        let out = apply_transform(&plan, x.view()).unwrap();
        assert_eq!(out.ncols(), 5);
        assert_eq!(out.row(0).to_vec(), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn single_column_polynomial_ten() {
        let x = array![[2.0], [0.5]];
        let plan =
            fit_transform(&[TransformStep::Polynomial { order: 10, interactions: false }], x.view())
                .unwrap();
        let out = apply_transform(&plan, x.view()).unwrap();
        assert_eq!(out.ncols(), 10);
        assert_eq!(out[[0, 9]], 1024.0);
    }

    #[test]
    fn twelve_columns_poly2_gives_ninety() {
        assert_eq!(brute_monomials(12, 2), 90);
        assert_eq!(TransformStep::poly2_interactions().output_columns(12), 90);
        let x = Array2::from_shape_fn((3, 12), |(i, j)| (i + j) as f64);
        let plan = fit_transform(&[TransformStep::poly2_interactions()], x.view()).unwrap();
        assert_eq!(plan.output_columns(), 90);
    }

    #[test]
    fn column_counts_match_brute_force_enumeration() {
        for p in 1..=10 {
            for k in 1..=4 {
                let step = TransformStep::Polynomial { order: k, interactions: true };
                assert_eq!(step.output_columns(p), brute_monomials(p, k), "p={p} k={k}");
                let x = Array2::from_shape_fn((2, p), |(i, j)| 1.0 + (i * p + j) as f64 / 10.0);
                let plan = fit_transform(&[step], x.view()).unwrap();
                assert_eq!(apply_transform(&plan, x.view()).unwrap().ncols(), brute_monomials(p, k));
                let powers = TransformStep::Polynomial { order: k, interactions: false };
                assert_eq!(powers.output_columns(p), p * k);
            }
            assert_eq!(TransformStep::TwoWayInteractions.output_columns(p), p + p * (p - 1) / 2);
        }
    }

    #[test]
    fn standardize_zero_mean_unit_variance_and_reuse() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * (j + 1) as f64);
        let plan = fit_transform(&[TransformStep::Standardize], x.view()).unwrap();
        let out = apply_transform(&plan, x.view()).unwrap();
        let (m, sd) = column_moments(out.view());
        for j in 0..3 {
            assert!(m[j].abs() < 1e-10);
            assert!((sd[j] - 1.0).abs() < 1e-10);
        }
        let held = array![[100.0, 0.0, 0.0]];
        let a = apply_transform(&plan, held.view()).unwrap();
        let b = apply_transform(&plan, held.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_column_passes_through_unscaled() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let plan = fit_transform(&[TransformStep::Standardize], x.view()).unwrap();
        assert_eq!(plan.unscaled_constant_columns, vec![1]);
        let out = apply_transform(&plan, x.view()).unwrap();
        assert!(out.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_orders_are_config_errors() {
        let x = array![[1.0], [2.0]];
        for step in [
            TransformStep::Polynomial { order: 0, interactions: false },
            TransformStep::Spline { knots: 2, degree: 0, interact: false },
            TransformStep::Spline { knots: 0, degree: 2, interact: false },
        ] {
            assert_eq!(fit_transform(&[step], x.view()).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn spline_basis_partition_of_unity_and_counts() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i as f64 * 0.37 + j as f64).sin());
        let step = TransformStep::Spline { knots: 3, degree: 2, interact: true };
        let plan = fit_transform(std::slice::from_ref(&step), x.view()).unwrap();
        let out = apply_transform(&plan, x.view()).unwrap();
        assert_eq!(out.ncols(), step.output_columns(2));
        assert_eq!(out.ncols(), 2 * 5 + 1);
        // the dropped first basis function is 1 - sum(rest) and lies in [0, 1]
        for row in out.rows() {
            let s: f64 = row.iter().take(5).sum();
            assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            assert!(row.iter().take(10).all(|&v| v >= -1e-12));
        }
        // out-of-range rows are clamped, not extrapolated
        let far = array![[100.0, -100.0]];
        let v = apply_transform(&plan, far.view()).unwrap();
        assert!(v.iter().take(10).all(|&b| (-1e-12..=1.0 + 1e-12).contains(&b)));
    }

    #[test]
    fn apply_is_bit_identical_across_calls_and_checks_shape() {
        let x = Array2::from_shape_fn((20, 3), |(i, j)| ((i + 1) * (j + 2)) as f64 / 7.0);
        let steps = [TransformStep::Standardize, TransformStep::poly2_interactions()];
        let plan = fit_transform(&steps, x.view()).unwrap();
        assert_eq!(apply_transform(&plan, x.view()).unwrap(), apply_transform(&plan, x.view()).unwrap());
        let bad = Array2::zeros((2, 4));
        assert!(matches!(apply_transform(&plan, bad.view()), Err(DdmlError::Shape { .. })));
    }
}
