//! Evaluator calibration from probe papers.
//!
//! The instructor grades the probe papers, so an evaluator's reports on
//! them can be compared against known true scores. The mean error gives
//! the bias estimate; the residual spread gives the reliability estimate.

use crate::assignment::PaperId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("need reports on at least 2 probes, got {0}")]
    TooFewProbes(usize),
    #[error("probe reports and true scores cover different papers")]
    KeySetMismatch,
    #[error("non-finite value in probe data for paper {0}")]
    NonFinite(PaperId),
}

/// Caps that keep a zero-residual (perfect) evaluator's reliability finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Upper bound on the reliability estimate.
    pub tau_cap: f64,
    /// Residual sums below this count as exactly zero.
    pub epsilon_var: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            tau_cap: 1e6,
            epsilon_var: 1e-12,
        }
    }
}

/// Calibration result for one evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    /// Estimated systematic bias, in score units.
    pub b_hat: f64,
    /// Estimated noise precision (1 / noise variance), capped at `tau_cap`.
    pub tau_hat: f64,
    /// Number of probes the estimate is based on.
    pub probe_count: usize,
}

/// Estimate bias and reliability from probe reports.
///
/// `b_hat` is the mean of (report − true). `tau_hat` is
/// `(x − 1) / Σ (report − true − b_hat)²` over the `x` probes, capped at
/// `tau_cap` (and set to it outright when the residual sum is below
/// `epsilon_var`).
pub fn estimate_params(
    reports_on_probes: &BTreeMap<PaperId, f64>,
    true_probe_scores: &BTreeMap<PaperId, f64>,
    config: &EstimationConfig,
) -> Result<EstimatedParams, EstimationError> {
    let x = reports_on_probes.len();
    if x < 2 {
        return Err(EstimationError::TooFewProbes(x));
    }
    if reports_on_probes.len() != true_probe_scores.len()
        || !reports_on_probes
            .keys()
            .all(|k| true_probe_scores.contains_key(k))
    {
        return Err(EstimationError::KeySetMismatch);
    }

    let mut errors = Vec::with_capacity(x);
    for (&paper, &report) in reports_on_probes {
        let truth = true_probe_scores[&paper];
        if !report.is_finite() || !truth.is_finite() {
            return Err(EstimationError::NonFinite(paper));
        }
        errors.push(report - truth);
    }

    let b_hat = errors.iter().sum::<f64>() / x as f64;
    let residual_sum: f64 = errors.iter().map(|e| (e - b_hat).powi(2)).sum();

    let tau_hat = if residual_sum < config.epsilon_var {
        config.tau_cap
    } else {
        ((x - 1) as f64 / residual_sum).min(config.tau_cap)
    };

    Ok(EstimatedParams {
        b_hat,
        tau_hat,
        probe_count: x,
    })
}
