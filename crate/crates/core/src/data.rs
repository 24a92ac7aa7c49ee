//! Dataset representation and CSV ingestion.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DdmlError, Result};

/// Outcome, treatment column(s) and covariates for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Array1<f64>,
    /// n x q treatment matrix.
    pub d: Array2<f64>,
    /// n x p covariate matrix.
    pub x: Array2<f64>,
    pub outcome_name: String,
    pub treatment_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Per treatment column: every entry is 0 or 1.
    pub treatment_binary: Vec<bool>,
    /// Rows dropped at ingestion because of missing or non-numeric cells.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(y: Array1<f64>, d: Array2<f64>, x: Array2<f64>) -> Result<Self> {
        let n = y.len();
        if d.nrows() != n || x.nrows() != n {
            return Err(DdmlError::data(format!(
                "column lengths differ: y={}, d={}, x={}",
                n,
                d.nrows(),
                x.nrows()
            )));
        }
        if n < 2 {
            return Err(DdmlError::data(format!("need at least 2 rows, got {n}")));
        }
        if d.ncols() == 0 {
            return Err(DdmlError::config("at least one treatment column is required"));
        }
        if y.iter().chain(d.iter()).chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(DdmlError::data("non-finite values in dataset"));
        }
        let treatment_binary = d.columns().into_iter().map(is_binary).collect();
        Ok(Dataset {
            outcome_name: "y".into(),
            treatment_names: (1..=d.ncols()).map(|j| format!("d{j}")).collect(),
            covariate_names: (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
            y,
            d,
            x,
            treatment_binary,
            dropped_rows: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.x.ncols()
    }

    pub fn treatment_count(&self) -> usize {
        self.d.ncols()
    }

    /// Column `j` of the treatment matrix.
    pub fn treatment(&self, j: usize) -> ArrayView1<'_, f64> {
        self.d.column(j)
    }

    /// Rows selected by index (with repetition allowed, e.g. for bootstrap).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset {
            y: self.y.select(Axis(0), rows),
            d: self.d.select(Axis(0), rows),
            x: self.x.select(Axis(0), rows),
            outcome_name: self.outcome_name.clone(),
            treatment_names: self.treatment_names.clone(),
            covariate_names: self.covariate_names.clone(),
            treatment_binary: Vec::new(),
            dropped_rows: 0,
        };
        out.treatment_binary = out.d.columns().into_iter().map(is_binary).collect();
        out
    }
}

pub(crate) fn is_binary(col: ArrayView1<f64>) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Which columns to use as covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateSelection {
    /// Every column not used as outcome or treatment, written `"rest"`.
    Rest(RestMarker),
    Columns(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestMarker {
    Rest,
}

impl Default for CovariateSelection {
    fn default() -> Self {
        CovariateSelection::Rest(RestMarker::Rest)
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub outcome: String,
    pub treatments: Vec<String>,
    #[serde(default)]
    pub covariates: CovariateSelection,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

/// Read a header-first CSV file.
///
/// Rows with a missing (`NA` or empty), unparseable or non-finite cell in any
/// selected column are dropped and counted in [`Dataset::dropped_rows`].
pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| DdmlError::data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, mapping)
}

pub fn read_csv<R: std::io::Read>(reader: R, mapping: &ColumnMapping) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DdmlError::data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DdmlError::config(format!("column `{name}` not found in header")))
    };
    if mapping.treatments.is_empty() {
        return Err(DdmlError::config("at least one treatment column is required"));
    }
    let y_idx = find(&mapping.outcome)?;
    let d_idx: Vec<usize> = mapping.treatments.iter().map(|t| find(t)).collect::<Result<_>>()?;
    let x_names: Vec<String> = match &mapping.covariates {
        CovariateSelection::Rest(_) => headers
            .iter()
            .filter(|h| **h != mapping.outcome && !mapping.treatments.contains(h))
            .cloned()
            .collect(),
        CovariateSelection::Columns(cols) => cols.clone(),
    };
    let x_idx: Vec<usize> = x_names.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let selected: Vec<usize> =
        std::iter::once(y_idx).chain(d_idx.iter().copied()).chain(x_idx.iter().copied()).collect();
    let width = selected.len();
    let mut values: Vec<f64> = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| DdmlError::data(format!("malformed csv: {e}")))?;
        let mut row = Vec::with_capacity(width);
        for &c in &selected {
            let cell = record.get(c).unwrap_or("");
            if is_missing(cell) {
                break;
            }
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => break,
            }
        }
        if row.len() == width {
            values.extend(row);
        } else {
            dropped += 1;
        }
    }
    let n = values.len() / width;
    if n == 0 {
        return Err(DdmlError::data("no usable rows after dropping incomplete records"));
    }
    let all = Array2::from_shape_vec((n, width), values).expect("row-major buffer");
    let q = d_idx.len();
    let y = all.column(0).to_owned();
    let d = all.slice(ndarray::s![.., 1..1 + q]).to_owned();
    let x = all.slice(ndarray::s![.., 1 + q..]).to_owned();
    if n < 2 {
        return Err(DdmlError::data(format!("need at least 2 usable rows, got {n}")));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} incomplete rows");
    }
    let treatment_binary = d.columns().into_iter().map(is_binary).collect();
    Ok(Dataset {
        y,
        d,
        x,
        outcome_name: mapping.outcome.clone(),
        treatment_names: mapping.treatments.clone(),
        covariate_names: x_names,
        treatment_binary,
        dropped_rows: dropped,
    })
}
