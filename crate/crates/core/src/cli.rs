//! The `ddml` command line: `estimate-plm`, `estimate-atet`, `simulate`
//! and `weights`, each driven by a TOML or JSON config file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure. Failures print one line `error: <kind>: <reason>` on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, ColumnMapping, Dataset};
use crate::error::{DdmlError, Result};
use crate::learners::LearnerSpec;
use crate::pipeline::{run_ddml, DdmlConfig, DdmlResult, Model, NuisanceLearners, Timings};
use crate::rng::derive_seed;
use crate::simulation::{
    calibrate_generative, run_monte_carlo, BootstrapDgp, CalibrationSpec, Dgp, DuplicateTerm, Engine, MonteCarloSpec,
    SimulationReport, ToyDgp, ToyKind, ToySpec,
};
use crate::stacking::{FinalLearner, StackingMode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }
    fn csv(self) -> bool {
        self != Format::Json
    }
}

/// CSV input: path plus column mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(flatten)]
    pub mapping: ColumnMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    ToyLinear,
    ToyNonlinear,
    Calibrated,
    Bootstrap,
}

/// Data-generating process block of a `simulate` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub kind: DgpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_term: Option<DuplicateTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl DgpConfig {
    fn toy_spec(&self, kind: ToyKind) -> ToySpec {
        let mut s = ToySpec::new(kind);
        s.theta0 = self.theta0.unwrap_or(s.theta0);
        s.p = self.p.or(s.p);
        s.rho = self.rho.unwrap_or(s.rho);
        s.c_y = self.c_y;
        s.c_d = self.c_d;
        s.r2_target = self.r2_target.unwrap_or(s.r2_target);
        s.duplicate_term = self.duplicate_term.unwrap_or_default();
        s
    }

    fn calibration_spec(&self) -> CalibrationSpec {
        let mut s = CalibrationSpec::new(self.engine.unwrap_or(Engine::Linear));
        s.theta0 = self.theta0.unwrap_or(s.theta0);
        s.kappa1 = self.kappa1.unwrap_or(s.kappa1);
        s.kappa2 = self.kappa2;
        s.threshold = self.threshold.unwrap_or(s.threshold);
        s
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A complete run description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub estimator: DdmlConfig,
    /// Candidate learners for every nuisance function.
    #[serde(default)]
    pub learners: Vec<LearnerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_learners: Option<Vec<LearnerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_learners: Option<Vec<LearnerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_learners: Option<Vec<LearnerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<MonteCarloSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parse TOML, or JSON when the file ends in `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DdmlError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| DdmlError::config(format!("invalid config: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| DdmlError::config(format!("invalid config: {}", one_line(&e.to_string()))))?
        };
        if let Some(data) = &mut cfg.data {
            if data.path.is_relative() {
                if let Some(dir) = path.parent() {
                    data.path = dir.join(&data.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn nuisance_learners(&self) -> NuisanceLearners {
        NuisanceLearners {
            learners: self.learners.clone(),
            ell: self.ell_learners.clone(),
            m: self.m_learners.clone(),
            g0: self.g0_learners.clone(),
        }
    }

    fn retain_learners(&mut self, keep: &[String]) {
        let f = |l: &mut Vec<LearnerSpec>| l.retain(|s| keep.contains(&s.name));
        f(&mut self.learners);
        self.ell_learners.iter_mut().for_each(f);
        self.m_learners.iter_mut().for_each(f);
        self.g0_learners.iter_mut().for_each(f);
    }

    fn check_learners(&self, targets: &[&str]) -> Result<()> {
        for t in targets {
            let own = match *t {
                "ell" => &self.ell_learners,
                "m" => &self.m_learners,
                _ => &self.g0_learners,
            };
            if own.as_ref().unwrap_or(&self.learners).is_empty() {
                return Err(DdmlError::config(format!("learner list for `{t}` is empty")));
            }
        }
        Ok(())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Parser)]
#[command(name = "ddml", version, about = "Double/debiased machine learning with stacking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Keep only these candidate learners (comma separated names).
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<String>>,
    /// Override the number of Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partially linear model.
    EstimatePlm(RunArgs),
    /// Average treatment effect on the treated.
    EstimateAtet(RunArgs),
    /// Monte Carlo simulation.
    Simulate(RunArgs),
    /// Print the weight and MSPE tables of a saved report.
    Weights {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

/// Run the CLI on `args` and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::EstimatePlm(a) => cmd_estimate(a, Model::Plm),
        Command::EstimateAtet(a) => cmd_estimate(a, Model::Atet),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Weights { report, format } => {
            let text = weights_table(&report, format)?;
            print!("{text}");
            Ok(())
        }
    }
}

struct Prepared {
    cfg: RunConfig,
    out: PathBuf,
    format: Format,
}

fn prepare(a: &RunArgs) -> Result<Prepared> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.format {
        cfg.output.format = f;
    }
    if let Some(keep) = &a.learners {
        cfg.retain_learners(keep);
    }
    if let Some(t) = a.threads {
        if t == 0 {
            return Err(DdmlError::config("--threads must be at least 1"));
        }
        // fails only if a pool already exists, e.g. when called twice in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out = a.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("ddml-out"));
    let format = cfg.output.format;
    Ok(Prepared { cfg, out, format })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n: usize,
    pub dropped_rows: usize,
    pub outcome: String,
    pub treatments: Vec<String>,
    pub treatment_binary: Vec<bool>,
    pub covariates: Vec<String>,
}

impl DatasetInfo {
    fn of(d: &Dataset) -> Self {
        DatasetInfo {
            n: d.n(),
            dropped_rows: d.dropped_rows,
            outcome: d.outcome_name.clone(),
            treatments: d.treatment_names.clone(),
            treatment_binary: d.treatment_binary.clone(),
            covariates: d.covariate_names.clone(),
        }
    }
}

/// JSON report of `estimate-plm` / `estimate-atet`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub command: String,
    pub master_seed: u64,
    pub config: RunConfig,
    pub dataset: DatasetInfo,
    pub result: DdmlResult,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DgpInfo {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_ols: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
}

/// JSON report of `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: String,
    pub master_seed: u64,
    pub config: RunConfig,
    pub dgp: DgpInfo,
    pub report: SimulationReport,
}

fn cmd_estimate(a: RunArgs, model: Model) -> Result<()> {
    let Prepared { mut cfg, out, format } = prepare(&a)?;
    cfg.estimator.model = model;
    cfg.estimator.validate()?;
    cfg.check_learners(match model {
        Model::Plm => &["ell", "m"],
        Model::Atet => &["g0", "m"],
    })?;
    let source = cfg.data.clone().ok_or_else(|| DdmlError::config("config has no [data] block"))?;
    let data = load_csv(&source.path, &source.mapping)?;
    if model == Model::Atet && !data.treatment_binary.iter().all(|&b| b) {
        return Err(DdmlError::config("treatment not binary"));
    }
    log::info!("loaded {} rows ({} dropped)", data.n(), data.dropped_rows);
    let result = run_ddml(&data, &cfg.nuisance_learners(), &cfg.estimator, cfg.seed)?;
    let command = match model {
        Model::Plm => "estimate-plm",
        Model::Atet => "estimate-atet",
    };
    let timings = result.timings.clone();
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        master_seed: cfg.seed,
        config: cfg,
        dataset: DatasetInfo::of(&data),
        result,
    };

    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    if format.json() {
        files.push(("report.json", to_json(&report)?));
    }
    if format.csv() {
        files.push(("estimates.csv", estimates_csv(&report.result)?));
        files.push(("weights.csv", weights_csv(&report.result)?));
        files.push(("mspe.csv", mspe_csv(&report.result)?));
    }
    files.push(("summary.txt", estimate_summary(&report).into_bytes()));
    files.push(("timings.json", to_json(&timings)?));
    write_all(&out, &files)
}

fn build_dgp(cfg: &RunConfig) -> Result<(Dgp, DgpInfo)> {
    let dc = cfg.dgp.clone().ok_or_else(|| DdmlError::config("config has no [dgp] block"))?;
    let load = || -> Result<Dataset> {
        let source = cfg.data.as_ref().ok_or_else(|| DdmlError::config("this dgp kind needs a [data] block"))?;
        load_csv(&source.path, &source.mapping)
    };
    Ok(match dc.kind {
        DgpKind::ToyLinear | DgpKind::ToyNonlinear => {
            let kind = if dc.kind == DgpKind::ToyLinear { ToyKind::Linear } else { ToyKind::Nonlinear };
            let toy = ToyDgp::new(dc.toy_spec(kind))?;
            let info = DgpInfo { theta0: Some(toy.spec.theta0), c_y: Some(toy.c_y), c_d: Some(toy.c_d), ..Default::default() };
            (Dgp::Toy(toy), info)
        }
        DgpKind::Calibrated => {
            let cal = calibrate_generative(&load()?, dc.calibration_spec(), derive_seed(cfg.seed, 0xCA1))?;
            let info = DgpInfo {
                theta0: Some(cal.spec.theta0),
                theta_ols: Some(cal.theta_ols),
                kappa1: Some(cal.spec.kappa1),
                kappa2: Some(cal.kappa2),
                ..Default::default()
            };
            (Dgp::Calibrated(Box::new(cal)), info)
        }
        DgpKind::Bootstrap => (Dgp::Bootstrap(Box::new(BootstrapDgp { data: load()? })), DgpInfo::default()),
    })
}

fn cmd_simulate(a: RunArgs) -> Result<()> {
    let Prepared { mut cfg, out, format } = prepare(&a)?;
    let mut mc = cfg.simulation.clone().ok_or_else(|| DdmlError::config("config has no [simulation] block"))?;
    if let Some(r) = a.reps {
        mc.reps = r;
    }
    cfg.simulation = Some(mc.clone());
    cfg.estimator.validate()?;
    cfg.check_learners(match cfg.estimator.model {
        Model::Plm => &["ell", "m"],
        Model::Atet => &["g0", "m"],
    })?;
    let (dgp, mut info) = build_dgp(&cfg)?;
    info.label = dgp.label();
    log::info!("simulating {} replications of {}", mc.reps, info.label);
    let report = run_monte_carlo(&dgp, &cfg.nuisance_learners(), &cfg.estimator, &mc, cfg.seed)?;
    let timings = report.timings.clone();
    let bundle = SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate".into(),
        master_seed: cfg.seed,
        config: cfg,
        dgp: info,
        report,
    };
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    if format.json() {
        files.push(("report.json", to_json(&bundle)?));
    }
    if format.csv() {
        let mut buf = Vec::new();
        bundle.report.write_csv(&mut buf)?;
        files.push(("metrics.csv", buf));
        files.push(("weights.csv", sim_weights_csv(&bundle.report)?));
    }
    files.push(("summary.txt", simulation_summary(&bundle.report).into_bytes()));
    files.push(("timings.json", to_json(&timings)?));
    write_all(&out, &files)
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| DdmlError::data(format!("json encode failed: {e}")))?;
    s.push(b'\n');
    Ok(s)
}

/// Write every file to a temporary name first, then rename, so a failed run
/// leaves no partial output.
pub fn write_all(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| DdmlError::config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(e.into());
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        std::fs::rename(&tmp, &dest)?;
    }
    log::info!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| DdmlError::data(format!("csv write failed: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| DdmlError::data(format!("csv write failed: {e}")))
}

fn estimates_csv(res: &DdmlResult) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for est in &res.estimates {
        let push = |rows: &mut Vec<Vec<String>>, rep: String, p: &crate::estimators::PointEstimate| {
            for (j, name) in res.treatment_names.iter().enumerate() {
                rows.push(vec![
                    est.label.clone(),
                    rep.clone(),
                    name.clone(),
                    format!("{:?}", p.theta[j]),
                    format!("{:?}", p.se[j]),
                    format!("{:?}", p.ci_low[j]),
                    format!("{:?}", p.ci_high[j]),
                ]);
            }
        };
        push(&mut rows, "aggregate".into(), &est.result.aggregate);
        for (r, p) in est.result.repetitions.iter().enumerate() {
            push(&mut rows, (r + 1).to_string(), p);
        }
    }
    csv_bytes(&["estimator", "repetition", "treatment", "theta", "se", "ci_low", "ci_high"], rows)
}

fn weights_csv(res: &DdmlResult) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (r, trace) in res.repetitions.iter().enumerate() {
        for wt in &trace.weights {
            let w = &wt.weights;
            for (k, row) in w.weights.rows().into_iter().enumerate() {
                let fold = if w.weights.nrows() == 1 { "all".to_string() } else { (k + 1).to_string() };
                for (j, name) in w.learner_names.iter().enumerate() {
                    rows.push(vec![
                        (r + 1).to_string(),
                        wt.target.clone(),
                        w.mode.label().into(),
                        w.final_learner.label().into(),
                        fold.clone(),
                        name.clone(),
                        format!("{:?}", row[j]),
                    ]);
                }
            }
        }
    }
    csv_bytes(&["repetition", "target", "mode", "final_learner", "fold", "learner", "weight"], rows)
}

fn mspe_csv(res: &DdmlResult) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (r, trace) in res.repetitions.iter().enumerate() {
        for m in &trace.mspe {
            for (name, v) in m.learner_names.iter().zip(&m.mspe) {
                rows.push(vec![(r + 1).to_string(), m.target.clone(), name.clone(), format!("{v:?}")]);
            }
        }
    }
    csv_bytes(&["repetition", "target", "learner", "mspe"], rows)
}

fn sim_weights_csv(rep: &SimulationReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for w in &rep.weights {
        for (name, v) in w.learner_names.iter().zip(&w.mean_weights) {
            rows.push(vec![w.target.clone(), w.mode.label().into(), w.final_learner.label().into(), name.clone(), format!("{v:?}")]);
        }
    }
    csv_bytes(&["target", "mode", "final_learner", "learner", "mean_weight"], rows)
}

fn estimate_summary(r: &EstimateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} on n = {} ({} rows dropped), master seed {}", r.command, r.dataset.n, r.dataset.dropped_rows, r.master_seed);
    let _ = writeln!(s, "{:<28} {:>10} {:>14} {:>12} {:>14} {:>14}", "estimator", "treatment", "theta", "se", "ci_low", "ci_high");
    for est in &r.result.estimates {
        let a = &est.result.aggregate;
        for (j, t) in r.result.treatment_names.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<28} {:>10} {:>14.6} {:>12.6} {:>14.6} {:>14.6}",
                est.label, t, a.theta[j], a.se[j], a.ci_low[j], a.ci_high[j]
            );
        }
    }
    s
}

fn simulation_summary(r: &SimulationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}: n = {}, {} replications ({} failed), bias against {}", r.dgp, r.n, r.reps, r.failed_reps, r.target);
    let _ = writeln!(s, "{:<28} {:>12} {:>12} {:>12} {:>10}", "estimator", "mean_bias", "se_bias", "mab", "coverage");
    for e in &r.estimators {
        let _ = writeln!(s, "{:<28} {:>12.5} {:>12.5} {:>12.5} {:>10.3}", e.estimator, e.mean_bias, e.se_bias, e.median_abs_bias, e.coverage);
    }
    s
}

/// One J-row table per (mode, final learner), one column per target.
struct WeightBlock {
    mode: StackingMode,
    final_learner: FinalLearner,
    /// `learners[target][j]`
    learners: Vec<Vec<String>>,
    targets: Vec<String>,
    /// `values[target][learner]`
    values: Vec<Vec<f64>>,
}

fn blocks_from_estimate(res: &DdmlResult) -> Vec<WeightBlock> {
    let mut blocks: Vec<WeightBlock> = Vec::new();
    let mut counts: Vec<Vec<usize>> = Vec::new();
    for trace in &res.repetitions {
        for wt in &trace.weights {
            let w = &wt.weights;
            let mean = w.mean_weights();
            let b = match blocks.iter().position(|b| b.mode == w.mode && b.final_learner == w.final_learner) {
                Some(b) => b,
                None => {
                    blocks.push(WeightBlock { mode: w.mode, final_learner: w.final_learner, learners: vec![], targets: vec![], values: vec![] });
                    counts.push(vec![]);
                    blocks.len() - 1
                }
            };
            let t = match blocks[b].targets.iter().position(|t| *t == wt.target) {
                Some(t) => t,
                None => {
                    blocks[b].targets.push(wt.target.clone());
                    blocks[b].learners.push(w.learner_names.clone());
                    blocks[b].values.push(vec![0.0; mean.len()]);
                    counts[b].push(0);
                    blocks[b].targets.len() - 1
                }
            };
            for (acc, v) in blocks[b].values[t].iter_mut().zip(mean.iter()) {
                *acc += v;
            }
            counts[b][t] += 1;
        }
    }
    for (b, c) in blocks.iter_mut().zip(counts) {
        for (vals, n) in b.values.iter_mut().zip(c) {
            vals.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    blocks
}

fn blocks_from_simulation(rep: &SimulationReport) -> Vec<WeightBlock> {
    let mut blocks: Vec<WeightBlock> = Vec::new();
    for w in &rep.weights {
        match blocks.iter_mut().find(|b| b.mode == w.mode && b.final_learner == w.final_learner) {
            Some(b) => {
                b.targets.push(w.target.clone());
                b.learners.push(w.learner_names.clone());
                b.values.push(w.mean_weights.clone());
            }
            None => blocks.push(WeightBlock {
                mode: w.mode,
                final_learner: w.final_learner,
                learners: vec![w.learner_names.clone()],
                targets: vec![w.target.clone()],
                values: vec![w.mean_weights.clone()],
            }),
        }
    }
    blocks
}

/// Render the weight tables of a saved report (text, or CSV with
/// `Format::Csv`).
pub fn weights_table(path: &Path, format: Format) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| DdmlError::config(format!("cannot read report {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DdmlError::data(format!("invalid report: {e}")))?;
    if value.get("schema_version").and_then(|v| v.as_u64()) != Some(SCHEMA_VERSION as u64) {
        return Err(DdmlError::data("unsupported report schema_version"));
    }
    let bad = |e: serde_json::Error| DdmlError::data(format!("invalid report: {e}"));
    let (blocks, mspe): (Vec<WeightBlock>, Vec<(String, Vec<String>, Vec<f64>)>) =
        match value.get("command").and_then(|c| c.as_str()) {
            Some("simulate") => {
                let r: SimulateReport = serde_json::from_value(value).map_err(bad)?;
                let m = r.report.mspe.iter().map(|m| (m.target.clone(), m.learner_names.clone(), m.mean_mspe.clone())).collect();
                (blocks_from_simulation(&r.report), m)
            }
            _ => {
                let r: EstimateReport = serde_json::from_value(value).map_err(bad)?;
                let mut m: Vec<(String, Vec<String>, Vec<f64>, usize)> = Vec::new();
                for trace in &r.result.repetitions {
                    for t in &trace.mspe {
                        match m.iter_mut().find(|x| x.0 == t.target) {
                            Some(x) => {
                                x.2.iter_mut().zip(&t.mspe).for_each(|(a, v)| *a += v);
                                x.3 += 1;
                            }
                            None => m.push((t.target.clone(), t.learner_names.clone(), t.mspe.clone(), 1)),
                        }
                    }
                }
                let m = m.into_iter().map(|(t, l, v, c)| (t, l, v.iter().map(|x| x / c as f64).collect())).collect();
                (blocks_from_estimate(&r.result), m)
            }
        };

    let mut s = String::new();
    if format == Format::Csv {
        let _ = writeln!(s, "table,mode,final_learner,target,learner,value");
        for b in &blocks {
            for ((t, names), vals) in b.targets.iter().zip(&b.learners).zip(&b.values) {
                for (l, v) in names.iter().zip(vals) {
                    let _ = writeln!(s, "weight,{},{},{},{},{:?}", b.mode.label(), b.final_learner.label(), t, l, v);
                }
            }
        }
        for (t, learners, vals) in &mspe {
            for (l, v) in learners.iter().zip(vals) {
                let _ = writeln!(s, "mspe,,,{t},{l},{v:?}");
            }
        }
        return Ok(s);
    }
    for b in &blocks {
        let _ = writeln!(s, "{} stacking, final learner {}", b.mode.label(), b.final_learner.label());
        let _ = write!(s, "{:<28}", "learner");
        for t in &b.targets {
            let _ = write!(s, " {t:>10}");
        }
        let _ = writeln!(s);
        for j in 0..b.learners.first().map_or(0, Vec::len) {
            let mut names: Vec<&str> = b.learners.iter().map(|l| l[j].as_str()).collect();
            names.dedup();
            let _ = write!(s, "{:<28}", names.join(" / "));
            for vals in &b.values {
                let _ = write!(s, " {:>10.3}", vals[j]);
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    }
    if !mspe.is_empty() {
        let _ = writeln!(s, "out-of-fold MSPE");
        for (t, learners, vals) in &mspe {
            for (l, v) in learners.iter().zip(vals) {
                let _ = writeln!(s, "{t:<6} {l:<28} {v:>14.6}");
            }
        }
    }
    Ok(s)
}

/// Timings file written next to a report.
pub fn read_timings(dir: &Path) -> Result<Timings> {
    let text = std::fs::read_to_string(dir.join("timings.json"))?;
    serde_json::from_str(&text).map_err(|e| DdmlError::data(format!("invalid timings: {e}")))
}
