//! Loss shaping for multi-step time series forecasting.
//!
//! Per-step constraints on the forecast loss, trained with a primal-dual
//! method, plus a convex oracle for certifying the trainer on small problems.

pub mod cli;
pub mod config;
pub mod constraints;
pub mod data;
pub mod error;
pub mod eval;
pub mod optim;
pub mod oracle;
pub mod pipeline;
pub mod predictor;
pub mod record;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
