//! Generative model for true scores and evaluator reports.
//!
//! A submission's true quality is drawn from a normal prior with mean `mu`
//! and precision `gamma`. Evaluator `i` observes a submission with true
//! score `y` and reports `y + bias_i + noise`, where the noise is zero-mean
//! normal with precision `reliability_i` (so its standard deviation is
//! `1 / sqrt(reliability_i)`).

use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("prior precision must be finite and positive, got {0}")]
    BadGamma(f64),
    #[error("prior mean must be finite, got {0}")]
    BadMu(f64),
    #[error("reliability must be finite and positive, got {0}")]
    BadReliability(f64),
    #[error("bias must be finite, got {0}")]
    BadBias(f64),
    #[error("score interval needs lo < hi, got [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
}

/// Closed interval the displayed grades live in. Aggregation happens on the
/// unclipped real line; clipping applies only at the presentation edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ModelError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }
}

/// Normal prior over true scores: mean `mu`, precision `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mu: f64,
    pub gamma: f64,
}

impl Prior {
    pub fn new(mu: f64, gamma: f64) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::BadMu(mu));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ModelError::BadGamma(gamma));
        }
        Ok(Self { mu, gamma })
    }

    pub fn stddev(&self) -> f64 {
        (1.0 / self.gamma).sqrt()
    }
}

/// An evaluator's latent reporting behaviour: a systematic additive bias and
/// a noise precision (reliability). Higher reliability means tighter reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorStrategy {
    pub bias: f64,
    pub reliability: f64,
}

impl EvaluatorStrategy {
    pub fn new(bias: f64, reliability: f64) -> Result<Self, ModelError> {
        if !bias.is_finite() {
            return Err(ModelError::BadBias(bias));
        }
        if !(reliability.is_finite() && reliability > 0.0) {
            return Err(ModelError::BadReliability(reliability));
        }
        Ok(Self { bias, reliability })
    }

    /// Noise standard deviation; `noise_stddev()^2 * reliability == 1`.
    pub fn noise_stddev(&self) -> f64 {
        1.0 / self.reliability.sqrt()
    }
}

/// Draw `n` true scores i.i.d. from the prior.
pub fn sample_true_scores(prior: &Prior, n: usize, rng: &mut RngStream) -> Vec<f64> {
    let sd = prior.stddev();
    (0..n).map(|_| prior.mu + sd * rng.standard_normal()).collect()
}

/// One report together with the standardized noise draw that produced it.
/// Keeping the draw lets counterfactual pipelines reuse identical noise
/// under a different strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub value: f64,
    pub standardized_noise: f64,
}

/// Report for true score `y` under `strategy`, consuming one normal draw.
pub fn sample_report(y: f64, strategy: &EvaluatorStrategy, rng: &mut RngStream) -> Report {
    let m = rng.standard_normal();
    Report {
        value: report_from_standardized(y, strategy, m),
        standardized_noise: m,
    }
}

/// Deterministic report given a standardized noise draw `m`:
/// `y + bias + noise_stddev * m`.
pub fn report_from_standardized(y: f64, strategy: &EvaluatorStrategy, m: f64) -> f64 {
    y + strategy.bias + strategy.noise_stddev() * m
}
