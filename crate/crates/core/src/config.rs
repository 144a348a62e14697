//! Run configuration: one file drives exams, property experiments, and
//! budget calibration.
//!
//! The on-disk format is TOML written as flat dotted keys
//! (`exam.n = 6`, `prior.mu = 50.0`); bracketed `[exam]` sections parse to
//! the same structure. The identical shape is accepted as JSON over the
//! service API. Token amounts are integers in the smallest unit
//! (micro-tokens, 10^-6 of a token).

use crate::model::{ModelError, Prior, ScoreInterval};
use crate::sim::{ConditioningMode, SimShape, StrategyPrior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("exam.n must be >= 1")]
    BadN,
    #[error("exam.m must be >= 1")]
    BadM,
    #[error("exam.k must be even and >= 4 (each evaluator needs at least 2 probes)")]
    BadK,
    #[error("exam.ell = {ell} must be >= k/2 = {half_k}")]
    EllTooSmall { ell: u32, half_k: u32 },
    #[error("exam needs n - ell >= k/2 regular papers, got n = {n}, ell = {ell}, k/2 = {half_k}")]
    TooFewRegularPapers { n: u32, ell: u32, half_k: u32 },
    #[error("exam.coverage must be >= 1")]
    BadCoverage,
    #[error("exam.max_attempts must be >= 1")]
    BadMaxAttempts,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("prior.mu = {mu} must lie inside interval [{lo}, {hi}]")]
    MuOutsideInterval { mu: f64, lo: f64, hi: f64 },
    #[error("payout.alpha must be finite and > 0, got {0}")]
    BadAlpha(f64),
    #[error("calibration.safety_margin must be in [0, 1), got {0}")]
    BadMargin(f64),
    #[error("calibration.k_net must be finite and >= 0, got {0}")]
    BadKNet(f64),
    #[error("calibration.mc_samples must be >= 1")]
    BadMcSamples,
    #[error("strategy prior needs 0 < reliability_min <= reliability_max, got [{min}, {max}]")]
    BadReliabilityRange { min: f64, max: f64 },
    #[error("strategy prior bias_stddev must be finite and >= 0, got {0}")]
    BadBiasStddev(f64),
    #[error("properties.replicas must be >= 1")]
    BadReplicas,
    #[error("properties.{grid} must be non-empty, finite, and positive where required")]
    BadGrid { grid: &'static str },
    #[error("properties.target must be < exam.m")]
    TargetOutOfRange,
    #[error("properties.pointwise_probes must be >= 2")]
    BadPointwiseProbes,
}

/// Exam shape and lifecycle limits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamSection {
    /// Papers (candidates).
    pub n: u32,
    /// Evaluators.
    pub m: u32,
    /// Probe papers graded by the instructor.
    pub ell: u32,
    /// Bundle size per evaluator.
    pub k: u32,
    /// Minimum evaluators per regular paper on the ledger path.
    #[serde(default = "default_coverage")]
    pub coverage: u32,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
}

fn default_coverage() -> u32 {
    1
}

fn default_max_attempts() -> u32 {
    1
}

/// Fees and stakes in micro-tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSchedule {
    pub instructor_fee: u64,
    pub candidate_fee: u64,
    pub evaluator_stake: u64,
    /// Charged on evaluation submission, reimbursed at finalize.
    pub evaluation_gas_fee: u64,
    pub viewer_fee: u64,
    pub regrade_penalty: u64,
    /// Charge `regrade_penalty` when a contested grade is not raised.
    pub penalty_enabled: bool,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            instructor_fee: 10_000_000,
            candidate_fee: 5_000_000,
            evaluator_stake: 2_000_000,
            evaluation_gas_fee: 100_000,
            viewer_fee: 1_000_000,
            regrade_penalty: 500_000,
            penalty_enabled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoutSection {
    /// Transfer scale. Leave unset to calibrate from the calibration
    /// section instead.
    pub alpha: Option<f64>,
}

/// Property-check selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Epbi,
    Eprm,
    Pointwise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertiesSection {
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default = "default_mode")]
    pub mode: ConditioningMode,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    /// Evaluator whose strategy is swept.
    #[serde(default)]
    pub target: u32,
    #[serde(default = "default_sweep_alpha")]
    pub alpha: f64,
    #[serde(default = "default_bias_grid")]
    pub bias_grid: Vec<f64>,
    /// Reliability held fixed across the bias sweep.
    #[serde(default = "default_epbi_reliability")]
    pub epbi_reliability: f64,
    #[serde(default = "default_reliability_grid")]
    pub reliability_grid: Vec<f64>,
    /// Bias held fixed across the reliability sweep.
    #[serde(default)]
    pub eprm_bias: f64,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Vec<f64>,
    #[serde(default = "default_pointwise_instances")]
    pub pointwise_instances: u64,
    /// Probes per evaluator in pointwise instances.
    #[serde(default = "default_pointwise_probes")]
    pub pointwise_probes: u32,
    /// Co-graders on the pointwise paper.
    #[serde(default = "default_pointwise_others")]
    pub pointwise_others: u32,
}

fn default_checks() -> Vec<CheckKind> {
    vec![CheckKind::Epbi, CheckKind::Eprm, CheckKind::Pointwise]
}

fn default_mode() -> ConditioningMode {
    ConditioningMode::OwnNoise
}

fn default_replicas() -> u64 {
    10_000
}

fn default_sweep_alpha() -> f64 {
    1.0
}

fn default_bias_grid() -> Vec<f64> {
    vec![-5.0, 0.0, 5.0]
}

fn default_epbi_reliability() -> f64 {
    1.0
}

fn default_reliability_grid() -> Vec<f64> {
    vec![0.25, 1.0, 4.0, 16.0]
}

fn default_sigma_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

fn default_pointwise_instances() -> u64 {
    100
}

fn default_pointwise_probes() -> u32 {
    8
}

fn default_pointwise_others() -> u32 {
    2
}

impl Default for PropertiesSection {
    fn default() -> Self {
        Self {
            checks: default_checks(),
            mode: default_mode(),
            replicas: default_replicas(),
            target: 0,
            alpha: default_sweep_alpha(),
            bias_grid: default_bias_grid(),
            epbi_reliability: default_epbi_reliability(),
            reliability_grid: default_reliability_grid(),
            eprm_bias: 0.0,
            sigma_grid: default_sigma_grid(),
            pointwise_instances: default_pointwise_instances(),
            pointwise_probes: default_pointwise_probes(),
            pointwise_others: default_pointwise_others(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Pooled fees funding evaluator transfers, in whole tokens.
    pub k_net: f64,
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    #[serde(default = "default_bias_stddev")]
    pub bias_stddev: f64,
    #[serde(default = "default_reliability_min")]
    pub reliability_min: f64,
    #[serde(default = "default_reliability_max")]
    pub reliability_max: f64,
}

fn default_margin() -> f64 {
    0.2
}

fn default_mc_samples() -> u64 {
    2_000
}

fn default_bias_stddev() -> f64 {
    2.0
}

fn default_reliability_min() -> f64 {
    0.05
}

fn default_reliability_max() -> f64 {
    5.0
}

impl CalibrationSection {
    pub fn strategy_prior(&self) -> StrategyPrior {
        StrategyPrior {
            bias_stddev: self.bias_stddev,
            reliability_min: self.reliability_min,
            reliability_max: self.reliability_max,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
        }
    }
}

/// Whole config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub exam: ExamSection,
    pub prior: Prior,
    pub interval: ScoreInterval,
    #[serde(default)]
    pub fees: FeeSchedule,
    #[serde(default)]
    pub payout: PayoutSection,
    #[serde(default)]
    pub properties: Option<PropertiesSection>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
    #[serde(default)]
    pub run: RunSection,
}

/// Validated exam parameters in the shape the mechanism modules consume.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExamConfig {
    pub shape: SimShape,
    pub coverage: u32,
    pub max_attempts: u32,
    pub prior: Prior,
    pub interval: ScoreInterval,
    pub fees: FeeSchedule,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.exam;
        if e.n == 0 {
            return Err(ConfigError::BadN);
        }
        if e.m == 0 {
            return Err(ConfigError::BadM);
        }
        if e.k < 4 || !e.k.is_multiple_of(2) {
            return Err(ConfigError::BadK);
        }
        let half_k = e.k / 2;
        if e.ell < half_k {
            return Err(ConfigError::EllTooSmall { ell: e.ell, half_k });
        }
        if e.ell >= e.n || e.n - e.ell < half_k {
            return Err(ConfigError::TooFewRegularPapers {
                n: e.n,
                ell: e.ell,
                half_k,
            });
        }
        if e.coverage == 0 {
            return Err(ConfigError::BadCoverage);
        }
        if e.max_attempts == 0 {
            return Err(ConfigError::BadMaxAttempts);
        }
        Prior::new(self.prior.mu, self.prior.gamma)?;
        ScoreInterval::new(self.interval.lo, self.interval.hi)?;
        if !self.interval.contains(self.prior.mu) {
            return Err(ConfigError::MuOutsideInterval {
                mu: self.prior.mu,
                lo: self.interval.lo,
                hi: self.interval.hi,
            });
        }
        if let Some(alpha) = self.payout.alpha {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(ConfigError::BadAlpha(alpha));
            }
        }
        if let Some(c) = &self.calibration {
            if !(c.safety_margin.is_finite() && (0.0..1.0).contains(&c.safety_margin)) {
                return Err(ConfigError::BadMargin(c.safety_margin));
            }
            if !(c.k_net.is_finite() && c.k_net >= 0.0) {
                return Err(ConfigError::BadKNet(c.k_net));
            }
            if c.mc_samples == 0 {
                return Err(ConfigError::BadMcSamples);
            }
            validate_strategy_prior(&c.strategy_prior())?;
        }
        if let Some(p) = &self.properties {
            if p.replicas == 0 {
                return Err(ConfigError::BadReplicas);
            }
            if p.target >= e.m {
                return Err(ConfigError::TargetOutOfRange);
            }
            if !(p.alpha.is_finite() && p.alpha > 0.0) {
                return Err(ConfigError::BadAlpha(p.alpha));
            }
            if p.bias_grid.is_empty() || p.bias_grid.iter().any(|b| !b.is_finite()) {
                return Err(ConfigError::BadGrid { grid: "bias_grid" });
            }
            if !(p.epbi_reliability.is_finite() && p.epbi_reliability > 0.0) {
                return Err(ConfigError::BadGrid {
                    grid: "epbi_reliability",
                });
            }
            if p.reliability_grid.is_empty()
                || p.reliability_grid.iter().any(|t| !(t.is_finite() && *t > 0.0))
            {
                return Err(ConfigError::BadGrid {
                    grid: "reliability_grid",
                });
            }
            if !p.eprm_bias.is_finite() {
                return Err(ConfigError::BadGrid { grid: "eprm_bias" });
            }
            if p.sigma_grid.is_empty()
                || p.sigma_grid.iter().any(|s| !(s.is_finite() && *s > 0.0))
            {
                return Err(ConfigError::BadGrid { grid: "sigma_grid" });
            }
            if p.pointwise_probes < 2 {
                return Err(ConfigError::BadPointwiseProbes);
            }
        }
        Ok(())
    }

    pub fn exam_config(&self) -> ExamConfig {
        ExamConfig {
            shape: SimShape {
                n: self.exam.n,
                m: self.exam.m,
                ell: self.exam.ell,
                k: self.exam.k,
            },
            coverage: self.exam.coverage,
            max_attempts: self.exam.max_attempts,
            prior: self.prior,
            interval: self.interval,
            fees: self.fees,
        }
    }
}

pub fn validate_strategy_prior(sp: &StrategyPrior) -> Result<(), ConfigError> {
    if !(sp.bias_stddev.is_finite() && sp.bias_stddev >= 0.0) {
        return Err(ConfigError::BadBiasStddev(sp.bias_stddev));
    }
    if !(sp.reliability_min.is_finite()
        && sp.reliability_max.is_finite()
        && sp.reliability_min > 0.0
        && sp.reliability_min <= sp.reliability_max)
    {
        return Err(ConfigError::BadReliabilityRange {
            min: sp.reliability_min,
            max: sp.reliability_max,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
exam.n = 6
exam.m = 2
exam.ell = 2
exam.k = 4
prior.mu = 50.0
prior.gamma = 0.01
interval.lo = 0.0
interval.hi = 100.0
";

    #[test]
    fn parses_flat_dotted_keys_with_defaults() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.exam.n, 6);
        assert_eq!(cfg.exam.coverage, 1);
        assert_eq!(cfg.run.seed, 42);
        assert_eq!(cfg.fees, FeeSchedule::default());
        assert!(cfg.payout.alpha.is_none());
    }

    #[test]
    fn parses_bracketed_sections_too() {
        let text = "\
[exam]
n = 6
m = 2
ell = 2
k = 4

[prior]
mu = 50.0
gamma = 0.01

[interval]
lo = 0.0
hi = 100.0

[payout]
alpha = 0.5
";
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.payout.alpha, Some(0.5));
    }

    #[test]
    fn parse_errors_carry_line_info() {
        let bad = MINIMAL.replace("exam.k = 4", "exam.k = \"four\"");
        let err = RunConfig::from_toml_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "message was: {msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}exam_typo.n = 6\n");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn validation_catches_shape_errors() {
        let odd_k = MINIMAL.replace("exam.k = 4", "exam.k = 3");
        assert!(matches!(
            RunConfig::from_toml_str(&odd_k),
            Err(ConfigError::BadK)
        ));
        let tiny_ell = MINIMAL.replace("exam.ell = 2", "exam.ell = 1");
        assert!(matches!(
            RunConfig::from_toml_str(&tiny_ell),
            Err(ConfigError::EllTooSmall { .. })
        ));
        let mu_outside = MINIMAL.replace("prior.mu = 50.0", "prior.mu = 150.0");
        assert!(matches!(
            RunConfig::from_toml_str(&mu_outside),
            Err(ConfigError::MuOutsideInterval { .. })
        ));
    }

    #[test]
    fn properties_defaults_round_trip_through_json() {
        let text = format!("{MINIMAL}properties.replicas = 500\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let p = cfg.properties.as_ref().unwrap();
        assert_eq!(p.replicas, 500);
        assert_eq!(p.mode, ConditioningMode::OwnNoise);
        assert_eq!(p.sigma_grid, vec![0.25, 0.5, 1.0, 2.0, 4.0]);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.exam.n, 6);
    }

    #[test]
    fn mode_strings_match_cli_flags() {
        let text = format!("{MINIMAL}properties.mode = \"own-noise-y\"\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(
            cfg.properties.unwrap().mode,
            ConditioningMode::OwnNoiseAndTruth
        );
    }
}
