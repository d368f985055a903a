//! Multi-task momentum portfolios built from a multi-gate mixture of LSTM
//! experts, with the benchmark strategies, walk-forward backtest and
//! performance reporting around them.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod backtest;
pub mod cli;
pub mod config;
pub mod data;
pub mod diffcore;
mod error;
pub mod features;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod portfolio;
pub mod report;
pub mod targets;

pub use error::{Error, Result};
