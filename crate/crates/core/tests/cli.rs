use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddml_stacking::crossfit::make_folds;
use ddml_stacking::data::Dataset;
use ddml_stacking::learners::LearnerSpec;
use ddml_stacking::pipeline::{run_ddml, DdmlConfig, Model, NuisanceLearners};
use ndarray::{Array1, Array2};
use serde_json::Value;

fn ddml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddml")).args(args).output().expect("spawn ddml")
}

fn sample_csv() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample.csv")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn plm_config(extra_estimator: &str, learners: &str) -> String {
    format!(
        r#"seed = 11
[data]
path = "{}"
outcome = "y"
treatments = ["d"]
covariates = ["x1", "x2", "x3", "x4", "x5"]
[estimator]
k = 3
{extra_estimator}
{learners}
"#,
        sample_csv().display()
    )
}

const OLS_ONLY: &str = "[[learners]]\nname = \"ols\"\nkind = \"ols\"\n";

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

/// Rows of the sample file that survive ingestion, as `(y, d, x1..x5)`.
fn sample_rows() -> Vec<Vec<f64>> {
    let text = fs::read_to_string(sample_csv()).unwrap();
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            let pick = [0usize, 1, 4, 5, 6, 7, 8];
            pick.iter().map(|&c| cells[c].parse::<f64>().ok()).collect::<Option<Vec<f64>>>()
        })
        .collect()
}

/// Ordinary least squares with intercept via the normal equations and
/// Gauss-Jordan elimination.
fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &t) in x.iter().zip(y) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += z[i] * z[j];
            }
            a[i][p] += z[i] * t;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

fn ols_predict(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

#[test]
fn single_ols_learner_matches_residual_regression() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &plm_config("", OLS_ONLY));
    let out = tmp.path().join("out");
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&out);
    let rows = sample_rows();
    let n = rows.len();
    assert_eq!(report["dataset"]["n"], n);

    let seed = report["result"]["repetitions"][0]["seed"].as_u64().unwrap();
    let folds = make_folds(n, 3, seed).unwrap();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r[2..].to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let d: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let mut y_res = vec![0.0; n];
    let mut d_res = vec![0.0; n];
    for k in 0..3 {
        let (train, test) = folds.split(k);
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let by = ols_fit(&xt, &train.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let bd = ols_fit(&xt, &train.iter().map(|&i| d[i]).collect::<Vec<_>>());
        for &i in &test {
            y_res[i] = y[i] - ols_predict(&by, &x[i]);
            d_res[i] = d[i] - ols_predict(&bd, &x[i]);
        }
    }
    let theta: f64 = y_res.iter().zip(&d_res).map(|(a, b)| a * b).sum::<f64>() / d_res.iter().map(|v| v * v).sum::<f64>();

    for label in ["short_cls", "learner_ols"] {
        let est = report["result"]["estimates"].as_array().unwrap().iter().find(|e| e["label"] == label).unwrap();
        let got = est["result"]["aggregate"]["theta"][0].as_f64().unwrap();
        assert!((got - theta).abs() < 1e-9, "{label}: {got} vs {theta}");
    }
}

#[test]
fn missing_column_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &plm_config("", OLS_ONLY).replace("\"x5\"", "\"x6\""));
    let out = tmp.path().join("out");
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: configuration error:") && err.contains("x6"), "{err}");
    assert!(!out.exists());
}

#[test]
fn non_binary_treatment_is_rejected_for_atet() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &plm_config("", OLS_ONLY));
    let o = ddml(&["estimate-atet", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("treatment not binary"), "{}", stderr(&o));
}

#[test]
fn missing_data_file_exits_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = plm_config("", OLS_ONLY).replace("sample.csv", "absent.csv");
    let cfg = write_config(tmp.path(), &body);
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error: data error:"));
}

#[test]
fn collinear_treatments_exit_with_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("twin.csv");
    let mut text = String::from("y,d1,d2,x1\n");
    for i in 0..40 {
        let x = (i as f64 * 0.37).sin();
        let d = (i as f64 * 1.3).cos();
        text.push_str(&format!("{},{d},{d},{x}\n", 2.0 * d + x));
    }
    fs::write(&csv, text).unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "[data]\npath = \"{}\"\noutcome = \"y\"\ntreatments = [\"d1\", \"d2\"]\n[estimator]\nk = 2\n{OLS_ONLY}",
            csv.display()
        ),
    );
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: numerical failure:"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &plm_config("folds = 3", OLS_ONLY));
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_cross_fitting_reports_the_median() {
    let tmp = tempfile::tempdir().unwrap();
    let learners = format!("{OLS_ONLY}[[learners]]\nname = \"lasso\"\nkind = \"lasso_cv\"\n");
    let cfg = write_config(tmp.path(), &plm_config("repetitions = 5\naggregation = \"median\"", &learners));
    let out = tmp.path().join("out");
    let o = ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&out);
    for est in report["result"]["estimates"].as_array().unwrap() {
        let mut thetas: Vec<f64> =
            est["result"]["repetitions"].as_array().unwrap().iter().map(|r| r["theta"][0].as_f64().unwrap()).collect();
        assert_eq!(thetas.len(), 5);
        thetas.sort_by(f64::total_cmp);
        assert_eq!(est["result"]["aggregate"]["theta"][0].as_f64().unwrap(), thetas[2]);
    }
    let csv = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    assert!(out.join("timings.json").exists() && out.join("summary.txt").exists());
}

#[test]
fn weights_subcommand_reprints_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let learners = format!("{OLS_ONLY}[[learners]]\nname = \"lasso\"\nkind = \"lasso_cv\"\n");
    let cfg = write_config(tmp.path(), &plm_config("stacking = [\"short\", \"pooled\"]", &learners));
    let out = tmp.path().join("out");
    assert!(ddml(&["estimate-plm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let report = out.join("report.json");

    let o = ddml(&["weights", report.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("short stacking, final learner cls") && text.contains("pooled stacking"), "{text}");
    assert!(text.contains("out-of-fold MSPE"));

    let o = ddml(&["weights", report.to_str().unwrap(), "--format", "csv"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let short_ell: f64 = csv
        .lines()
        .filter(|l| l.starts_with("weight,short,cls,ell,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((short_ell - 1.0).abs() < 1e-12);

    let o = ddml(&["weights", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

/// 20 rows with 2 treated, 5 folds: some seeds put both treated rows in the
/// same fold, leaving that fold's training set without treated units.
fn imbalanced_csv(dir: &Path) -> (PathBuf, Dataset) {
    let n = 20;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).sin()).collect();
    let d: Vec<f64> = (0..n).map(|i| if i == 3 || i == 11 { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i] + d[i] + 0.1 * (i as f64).cos()).collect();
    let mut text = String::from("y,d,x\n");
    for i in 0..n {
        text.push_str(&format!("{:?},{:?},{:?}\n", y[i], d[i], x[i]));
    }
    let path = dir.join("imbalanced.csv");
    fs::write(&path, text).unwrap();
    let data = Dataset::new(Array1::from(y), Array2::from_shape_vec((n, 1), d).unwrap(), Array2::from_shape_vec((n, 1), x).unwrap())
        .unwrap();
    (path, data)
}

#[test]
fn stratified_folds_prevent_empty_treatment_folds() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, data) = imbalanced_csv(tmp.path());
    let learners = NuisanceLearners::shared(vec![LearnerSpec::ols()]);
    let plain = DdmlConfig { model: Model::Atet, ..Default::default() };
    let seed = (0..200u64).find(|&s| run_ddml(&data, &learners, &plain, s).is_err()).expect("a failing seed exists");

    let body = |stratify: bool| {
        format!(
            "seed = {seed}\n[data]\npath = \"{}\"\noutcome = \"y\"\ntreatments = [\"d\"]\n[estimator]\nstratify = {stratify}\n{OLS_ONLY}",
            csv.display()
        )
    };
    let cfg = write_config(tmp.path(), &body(false));
    let o = ddml(&["estimate-atet", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stratified"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &body(true));
    let o = ddml(&["estimate-atet", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("b").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn json_config_and_learner_trimming() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{
  "seed": 3,
  "dgp": {"kind": "toy_linear"},
  "simulation": {"reps": 10, "n": 200},
  "estimator": {"k": 2},
  "learners": [
    {"name": "ols", "kind": "ols"},
    {"name": "rf", "kind": "random_forest", "n_trees": 10}
  ]
}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = ddml(&["simulate", "--config", cfg.to_str().unwrap(), "--reps", "3", "--learners", "ols", "--out", out.to_str().unwrap(), "--format", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&out);
    assert_eq!(report["report"]["reps"], 3);
    let labels: Vec<&str> = report["report"]["estimators"].as_array().unwrap().iter().map(|e| e["estimator"].as_str().unwrap()).collect();
    assert_eq!(labels, vec!["short_cls", "learner_ols"]);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}
