//! Transfer-scale calibration against the fee pool.
//!
//! Evaluator payments scale with `alpha`. The platform wants the expected
//! total payout to fit inside the pooled fees `k_net` with a safety
//! margin, so it estimates the expected payout at `alpha = 1` by Monte
//! Carlo over the strategy prior and score prior, then sets
//! `alpha = k_net * (1 - margin) / estimate` (payout is exactly linear in
//! `alpha`). Overruns remain possible in any single exam; the ledger
//! surfaces them as a reserve alert instead of truncating payments.

use crate::assignment::build_partial_assignment;
use crate::config::ExamConfig;
use crate::rng::RngStream;
use crate::sim::{total_payout_replica, SimError, StrategyPrior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("alpha must be finite and > 0, got {0}")]
    BadAlpha(f64),
    #[error("k_net must be finite and >= 0, got {0}")]
    BadKNet(f64),
    #[error("safety_margin must be in [0, 1), got {0}")]
    BadMargin(f64),
    #[error("mc_samples must be >= 1")]
    NoSamples,
    #[error("expected payout at alpha = 1 is {0}, not strictly positive; cannot calibrate")]
    DegeneratePayout(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Calibration inputs: the fee pool and the population the operator
/// expects evaluators to come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Pooled fees available for transfers, in whole tokens.
    pub k_net: f64,
    /// Fraction of `k_net` held back.
    pub safety_margin: f64,
    pub mc_samples: u64,
    pub strategy_prior: StrategyPrior,
}

impl BudgetConfig {
    fn validate(&self) -> Result<(), BudgetError> {
        if !(self.k_net.is_finite() && self.k_net >= 0.0) {
            return Err(BudgetError::BadKNet(self.k_net));
        }
        if !(self.safety_margin.is_finite() && (0.0..1.0).contains(&self.safety_margin)) {
            return Err(BudgetError::BadMargin(self.safety_margin));
        }
        if self.mc_samples == 0 {
            return Err(BudgetError::NoSamples);
        }
        Ok(())
    }
}

/// Monte Carlo estimate of the expected total payout at a given `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoutEstimate {
    pub alpha: f64,
    pub mean: f64,
    /// 95% normal-approximation confidence half-width.
    pub ci_halfwidth: f64,
    pub samples: u64,
}

/// Draw `mc_samples` fresh exams on the seed-determined assignment and
/// estimate `E[sum of transfers]` at `alpha`. Runs at `alpha = 1` and
/// scales, so estimates at different `alpha` under one seed are exact
/// multiples of each other.
pub fn estimate_expected_payout(
    exam: &ExamConfig,
    budget: &BudgetConfig,
    alpha: f64,
    seed: u64,
) -> Result<PayoutEstimate, BudgetError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(BudgetError::BadAlpha(alpha));
    }
    budget.validate()?;
    let samples = payout_samples(exam, &budget.strategy_prior, budget.mc_samples, seed)?;
    let (mean1, ci1) = mean_and_ci(&samples);
    Ok(PayoutEstimate {
        alpha,
        mean: alpha * mean1,
        ci_halfwidth: alpha * ci1,
        samples: budget.mc_samples,
    })
}

/// Total-payout draws at `alpha = 1`, one per replica, on the exam's
/// seed-determined assignment.
pub fn payout_samples(
    exam: &ExamConfig,
    strategy_prior: &StrategyPrior,
    count: u64,
    seed: u64,
) -> Result<Vec<f64>, BudgetError> {
    let shape = exam.shape;
    let plan = build_partial_assignment(
        shape.n,
        shape.m,
        shape.ell,
        shape.k,
        &mut RngStream::new(seed, 0),
    )
    .map_err(SimError::from)?;
    (0..count)
        .map(|r| {
            total_payout_replica(&plan, &exam.prior, strategy_prior, 1.0, seed, r)
                .map_err(BudgetError::from)
        })
        .collect()
}

fn mean_and_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Calibration result, serialized as the JSON calibration report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub alpha: f64,
    /// Expected payout at the calibrated alpha: k_net * (1 - margin).
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Choose `alpha` so the expected payout is `k_net * (1 - safety_margin)`.
pub fn calibrate_alpha(
    exam: &ExamConfig,
    budget: &BudgetConfig,
    seed: u64,
) -> Result<CalibrationReport, BudgetError> {
    budget.validate()?;
    let at_one = estimate_expected_payout(exam, budget, 1.0, seed)?;
    if at_one.mean <= 0.0 {
        return Err(BudgetError::DegeneratePayout(at_one.mean));
    }
    let alpha = budget.k_net * (1.0 - budget.safety_margin) / at_one.mean;
    Ok(CalibrationReport {
        alpha,
        estimate: alpha * at_one.mean,
        ci_halfwidth: alpha * at_one.ci_halfwidth,
        samples: budget.mc_samples,
        seed,
    })
}
