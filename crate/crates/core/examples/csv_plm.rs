//! Load a CSV file and estimate a partially linear model with short-stacked
//! learners.
//!
//! cargo run --release --example csv_plm

use ddml_stacking::data::{load_csv, ColumnMapping, CovariateSelection};
use ddml_stacking::learners::LearnerSpec;
use ddml_stacking::pipeline::{run_ddml, DdmlConfig, NuisanceLearners};

fn main() -> ddml_stacking::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/sample.csv");
    let mapping = ColumnMapping {
        outcome: "y".into(),
        treatments: vec!["d".into()],
        covariates: CovariateSelection::Columns((1..=5).map(|j| format!("x{j}")).collect()),
    };
    let data = load_csv(path, &mapping)?;
    println!("{} rows ({} dropped for missing values)", data.n(), data.dropped_rows);

    let learners = NuisanceLearners::shared(vec![LearnerSpec::ols(), LearnerSpec::lasso_poly2(), LearnerSpec::rf_low()]);
    let cfg = DdmlConfig { repetitions: 3, ..DdmlConfig::default() };
    let result = run_ddml(&data, &learners, &cfg, 7)?;

    for e in &result.estimates {
        let a = &e.result.aggregate;
        println!("{:<22} theta = {:>8.4}  se = {:.4}  95% CI [{:.4}, {:.4}]", e.label, a.theta[0], a.se[0], a.ci_low[0], a.ci_high[0]);
    }
    Ok(())
}
