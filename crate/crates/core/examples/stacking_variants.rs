//! Compare conventional, short and pooled stacking with several final
//! learners on one simulated draw, and show the fitted weights.
//!
//! cargo run --release --example stacking_variants

use ddml_stacking::learners::LearnerSpec;
use ddml_stacking::pipeline::{run_ddml, DdmlConfig, NuisanceLearners};
use ddml_stacking::simulation::{ToyDgp, ToyKind, ToySpec};
use ddml_stacking::stacking::{FinalLearner, StackingMode};

fn main() -> ddml_stacking::Result<()> {
    let dgp = ToyDgp::new(ToySpec::new(ToyKind::Nonlinear))?;
    let data = dgp.draw(600, 11)?;

    let learners = NuisanceLearners::shared(vec![LearnerSpec::ols(), LearnerSpec::lasso_poly2(), LearnerSpec::gbt_low()]);
    let cfg = DdmlConfig {
        k: 5,
        v: 5,
        stacking: vec![StackingMode::Conventional, StackingMode::Short, StackingMode::Pooled],
        final_learners: vec![FinalLearner::Cls, FinalLearner::SingleBest, FinalLearner::Ols],
        ..DdmlConfig::default()
    };
    let result = run_ddml(&data, &learners, &cfg, 3)?;
    println!("true theta = {}", dgp.spec.theta0);
    for e in &result.estimates {
        let a = &e.result.aggregate;
        println!("{:<26} {:>8.4} ({:.4})", e.label, a.theta[0], a.se[0]);
    }

    let rep = &result.repetitions[0];
    for t in rep.weights.iter().filter(|t| t.weights.final_learner == FinalLearner::Cls) {
        let w = t.weights.mean_weights();
        let cells: Vec<String> = t.weights.learner_names.iter().zip(w.iter()).map(|(n, v)| format!("{n}={v:.3}")).collect();
        println!("{:<4} {:<13} {}", t.target, t.weights.mode.label(), cells.join("  "));
    }
    println!("timings: plain {:.2}s, nested {:.2}s", result.timings.plain_secs, result.timings.nested_secs);
    Ok(())
}
