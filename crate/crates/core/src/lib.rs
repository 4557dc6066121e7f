//! Change point detection for trending, heterogeneous time series.
//!
//! A forecaster predicts the regular trend over hopping windows and a CUSUM
//! chart compares the observations with the forecast. Reference detectors,
//! a wear-data simulator, a Poisson standardization and an evaluation
//! harness sit alongside.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod cusum;
pub mod detector;
pub mod eval;
pub mod io;
pub mod error;
pub mod lstm;
pub mod numeric;
pub mod pnc;
pub mod predict;
pub mod refdet;
pub mod series;
pub mod simulate;
pub mod standardize;

pub use error::{Error, Result};
pub use series::{CpLabel, Detection, LabeledSeries, Phase, WindowPair};
