//! Double/debiased machine learning with stacked nuisance estimators.
//!
//! The crate cross-fits a set of candidate learners for each nuisance
//! function of the partially linear model (or of the ATET efficient score),
//! combines them with conventional, short or pooled stacking, and computes
//! the structural parameter with heteroskedasticity-robust inference. A
//! Monte Carlo harness reproduces the bias / coverage experiments on
//! synthetic and calibrated data-generating processes.
//!
//! Runnable walkthroughs live in `examples/`; the `ddml` binary drives the
//! same pipeline from a config file.

pub mod cli;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod simulation;
pub mod stacking;
pub mod transform;

pub use error::{DdmlError, Result};
