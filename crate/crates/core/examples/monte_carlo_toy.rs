//! A small Monte Carlo study on the linear and non-linear toy processes:
//! bias, coverage and average short-stacking weights.
//!
//! cargo run --release --example monte_carlo_toy

use ddml_stacking::learners::{LearnerSpec, Truth};
use ddml_stacking::pipeline::{DdmlConfig, NuisanceLearners};
use ddml_stacking::simulation::{run_monte_carlo, Dgp, MonteCarloSpec, ToyDgp, ToyKind, ToySpec};
use ddml_stacking::stacking::{FinalLearner, StackingMode};

fn main() -> ddml_stacking::Result<()> {
    let mc = MonteCarloSpec { reps: 20, n: 400, reference: None };
    let cfg = DdmlConfig::default();
    for kind in [ToyKind::Linear, ToyKind::Nonlinear] {
        let dgp = Dgp::Toy(ToyDgp::new(ToySpec::new(kind))?);
        // oracles are bound to the true nuisances by name
        let learners = NuisanceLearners {
            learners: vec![LearnerSpec::ols(), LearnerSpec::lasso_poly2()],
            ell: Some(vec![LearnerSpec::oracle(Truth::named("ell")), LearnerSpec::ols(), LearnerSpec::lasso_poly2()]),
            m: Some(vec![LearnerSpec::oracle(Truth::named("m")), LearnerSpec::ols(), LearnerSpec::lasso_poly2()]),
            g0: None,
        };
        let report = run_monte_carlo(&dgp, &learners, &cfg, &mc, 99)?;
        println!("{} (theta0 = {})", report.dgp, report.target);
        for e in &report.estimators {
            println!("  {:<24} bias {:>8.4} ± {:.4}  coverage {:.2}", e.estimator, e.mean_bias, e.se_bias, e.coverage);
        }
        for t in ["ell", "m1"] {
            if let Some(w) = report.weight(t, StackingMode::Short, FinalLearner::Cls) {
                let cells: Vec<String> = w.learner_names.iter().zip(&w.mean_weights).map(|(n, v)| format!("{n}={v:.2}")).collect();
                println!("  weights {t:<3} {}", cells.join("  "));
            }
        }
    }
    Ok(())
}
