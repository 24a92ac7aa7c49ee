//! Covariate expansions: polynomial, interaction and spline bases fitted on
//! training rows and applied to new rows.
//!
//! cargo run --release --example transforms

use ddml_stacking::transform::{apply_transform, fit_transform, TransformStep};
use ndarray::array;

fn main() -> ddml_stacking::Result<()> {
    let train = array![[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 5.0], [4.0, 4.0], [5.0, 6.0]];
    let test = array![[2.5, 3.5], [9.0, 0.0]];

    let pipelines = [
        ("poly2", vec![TransformStep::poly2_interactions()]),
        ("standardize+interactions", vec![TransformStep::Standardize, TransformStep::TwoWayInteractions]),
        ("spline", vec![TransformStep::Spline { knots: 2, degree: 3, interact: false }]),
    ];
    for (name, steps) in pipelines {
        let plan = fit_transform(&steps, train.view())?;
        let z = apply_transform(&plan, test.view())?;
        println!("{name}: {} -> {} columns", plan.input_columns(), plan.output_columns());
        for row in z.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            println!("  [{}]", cells.join(", "));
        }
    }
    Ok(())
}
