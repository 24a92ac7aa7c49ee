//! Average treatment effect on the treated with a binary treatment and
//! stratified folds.
//!
//! cargo run --release --example atet

use ddml_stacking::data::{load_csv, ColumnMapping, CovariateSelection};
use ddml_stacking::estimators::AtetVariance;
use ddml_stacking::learners::LearnerSpec;
use ddml_stacking::pipeline::{run_ddml, DdmlConfig, Model, NuisanceLearners};

fn main() -> ddml_stacking::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/sample.csv");
    let mapping = ColumnMapping {
        outcome: "y_t".into(),
        treatments: vec!["treated".into()],
        covariates: CovariateSelection::Columns((1..=5).map(|j| format!("x{j}")).collect()),
    };
    let data = load_csv(path, &mapping)?;

    let learners = NuisanceLearners {
        learners: vec![LearnerSpec::ols(), LearnerSpec::gbt_low()],
        m: Some(vec![LearnerSpec::logistic(), LearnerSpec::gbt_low()]),
        ..Default::default()
    };
    for variance in [AtetVariance::Influence, AtetVariance::Summand] {
        let cfg = DdmlConfig { model: Model::Atet, stratify: true, repetitions: 3, atet_variance: variance, ..DdmlConfig::default() };
        let result = run_ddml(&data, &learners, &cfg, 21)?;
        println!("variance: {variance:?}");
        for e in &result.estimates {
            let a = &e.result.aggregate;
            println!("  {:<20} {:>8.4} ({:.4})  clipped {}", e.label, a.theta[0], a.se[0], a.clipped);
        }
    }
    Ok(())
}
