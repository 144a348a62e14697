//! Core mechanism library for peer-evaluated certification exams:
//! probe-calibrated evaluator estimation, de-biased score aggregation,
//! marginal-contribution transfers, budget calibration, a deterministic
//! hash-chained token ledger, and Monte Carlo property checks.

pub mod assignment;
pub mod budget;
pub mod config;
pub mod estimation;
pub mod harness;
pub mod ledger;
pub mod model;
pub mod rng;
pub mod scoring;
pub mod sim;
