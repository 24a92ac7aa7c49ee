//! Constrained least squares on the unit simplex, checked against its
//! optimality conditions.
//!
//! cargo run --release --example cls_solver

use ddml_stacking::rng::rng_from;
use ddml_stacking::stacking::{cls_objective, cls_solve, kkt_residual};
use ndarray::{Array1, Array2};
use rand::Rng;

fn main() {
    let mut rng = rng_from(5);
    let n = 200;
    let y: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    // a good predictor, a biased one, pure noise, and a copy of the first
    let good: Array1<f64> = y.mapv(|v| v + 0.3 * rng.random_range(-1.0..1.0));
    let biased = y.mapv(|v| 0.5 * v + 0.4);
    let noise: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p = Array2::zeros((n, 4));
    p.column_mut(0).assign(&good);
    p.column_mut(1).assign(&biased);
    p.column_mut(2).assign(&noise);
    p.column_mut(3).assign(&good);

    let w = cls_solve(p.view(), y.view());
    let q = p.t().dot(&p);
    let c = p.t().dot(&y);
    println!("weights   {:.4}", w);
    println!("sum       {:.12}", w.sum());
    println!("objective {:.6}", cls_objective(p.view(), y.view(), w.view()));
    println!("kkt       {:.2e}", kkt_residual(q.view(), c.view(), w.view()));
}
