//! Fit every candidate learner on a non-linear regression problem and report
//! hold-out error and training diagnostics.
//!
//! cargo run --release --example learner_zoo

use ddml_stacking::learners::{LearnerKind, LearnerSpec, LogisticParams};
use ddml_stacking::simulation::{ToyDgp, ToyKind, ToySpec};
use ddml_stacking::transform::TransformStep;
use ndarray::s;

fn main() -> ddml_stacking::Result<()> {
    let dgp = ToyDgp::new(ToySpec::new(ToyKind::Nonlinear))?;
    let data = dgp.draw(1500, 1)?;
    let (train, test) = (s![..1000, ..], s![1000.., ..]);
    let (xtr, xte) = (data.x.slice(train), data.x.slice(test));
    let (ytr, yte) = (data.y.slice(s![..1000]), data.y.slice(s![1000..]));

    let zoo = [
        LearnerSpec::ols(),
        LearnerSpec::ridge(),
        LearnerSpec::lasso(),
        LearnerSpec::lasso_poly2(),
        LearnerSpec::new("lasso_spline", LearnerKind::LassoCv(Default::default()))
            .with_transform(vec![TransformStep::Spline { knots: 4, degree: 3, interact: true }]),
        LearnerSpec::rf_low().with_seed(1),
        LearnerSpec::gbt_low().with_seed(1),
    ];
    println!("{:<16} {:>10} {:>10} {:>12}", "learner", "train mse", "test mse", "penalty");
    for spec in &zoo {
        let fitted = spec.fit(xtr, ytr)?;
        let pred = fitted.predict(xte)?;
        let mse = (&pred - &yte).mapv(|v| v * v).mean().unwrap_or(f64::NAN);
        let pen = fitted.diagnostics.chosen_penalty.map_or("-".into(), |l| format!("{l:.4}"));
        println!("{:<16} {:>10.4} {:>10.4} {:>12}", spec.name, fitted.diagnostics.in_sample_mse, mse, pen);
    }

    // a binary target: logistic regression gives clipped probabilities
    let treated = data.d.column(0).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let logit = LearnerSpec::new("logistic", LearnerKind::Logistic(LogisticParams::default()));
    let p = logit.fit(xtr, treated.slice(s![..1000]))?.predict(xte)?;
    println!("logistic: mean P(D=1|X) on hold-out {:.3}", p.mean().unwrap_or(f64::NAN));
    Ok(())
}
