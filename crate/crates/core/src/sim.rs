//! Single-exam simulation: draw a synthetic exam from the generative model
//! and push it through the full scoring pipeline.
//!
//! Experiments hold parts of the draw fixed. A [`FrozenEnvironment`] pins
//! the assignment, true scores, the other evaluators' strategies, and
//! their standardized noise, so sweeps over one target evaluator's
//! strategy see "any realization of the other uncertainties" exactly
//! frozen while the target's own noise is redrawn per replica.

use crate::assignment::{
    build_partial_assignment, AssignmentError, AssignmentPlan, EvaluatorId, PaperId,
};
use crate::estimation::{estimate_params, EstimatedParams, EstimationConfig, EstimationError};
use crate::model::{
    report_from_standardized, sample_true_scores, EvaluatorStrategy, ModelError, Prior,
};
use crate::rng::RngStream;
use crate::scoring::{
    resolve_regrades, score_papers, transfers_with, PaperScoreRecord, ReferencePolicy,
    RegradePolicy, ScoringError, TransferSheet,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("target evaluator {0} is not in the plan")]
    UnknownTarget(EvaluatorId),
}

/// Exam shape for simulations. Grading may be under-staffed: papers beyond
/// the available slots stay uncovered and fall back to the prior mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimShape {
    /// Total papers.
    pub n: u32,
    /// Evaluators.
    pub m: u32,
    /// Probe papers.
    pub ell: u32,
    /// Bundle size per evaluator (even).
    pub k: u32,
}

/// Population the operator believes evaluators are drawn from: bias is
/// normal around zero, reliability log-uniform on a positive interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyPrior {
    pub bias_stddev: f64,
    pub reliability_min: f64,
    pub reliability_max: f64,
}

impl Default for StrategyPrior {
    fn default() -> Self {
        Self {
            bias_stddev: 2.0,
            reliability_min: 0.05,
            reliability_max: 5.0,
        }
    }
}

impl StrategyPrior {
    pub fn sample(&self, rng: &mut RngStream) -> EvaluatorStrategy {
        let bias = self.bias_stddev * rng.standard_normal();
        let (lo, hi) = (self.reliability_min.ln(), self.reliability_max.ln());
        let u: f64 = rand::Rng::random_range(rng, 0.0..1.0);
        let reliability = (lo + u * (hi - lo)).exp();
        EvaluatorStrategy { bias, reliability }
    }
}

// Stream layout under one seed. Replica streams are spaced so the target's
// noise, redrawn truth, and budget redraws never collide.
const STREAM_PLAN: u64 = 0;
const STREAM_TRUTH: u64 = 1;
const STREAM_STRATEGIES: u64 = 2;
const STREAM_OTHER_NOISE: u64 = 3;
const STREAM_TARGET_NOISE_BASE: u64 = 1 << 20;
const STREAM_TRUTH_REDRAW_BASE: u64 = 1 << 40;
const STREAM_BUDGET_BASE: u64 = 1 << 50;

/// Everything held fixed while one evaluator's strategy is swept.
#[derive(Debug, Clone)]
pub struct FrozenEnvironment {
    pub seed: u64,
    pub shape: SimShape,
    pub prior: Prior,
    pub plan: AssignmentPlan,
    /// True scores of all papers (the frozen realization).
    pub truth: BTreeMap<PaperId, f64>,
    /// Other evaluators' strategies; the target's entry is unused.
    pub strategies: BTreeMap<EvaluatorId, EvaluatorStrategy>,
    /// Other evaluators' standardized noise per assigned paper.
    pub other_noise: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    pub target: EvaluatorId,
    pub estimation: EstimationConfig,
}

/// Draw and freeze an environment for a strategy sweep.
pub fn build_environment(
    shape: SimShape,
    prior: Prior,
    strategy_prior: &StrategyPrior,
    target: EvaluatorId,
    seed: u64,
) -> Result<FrozenEnvironment, SimError> {
    let plan = build_partial_assignment(
        shape.n,
        shape.m,
        shape.ell,
        shape.k,
        &mut RngStream::new(seed, STREAM_PLAN),
    )?;
    if !plan.per_evaluator.contains_key(&target) {
        return Err(SimError::UnknownTarget(target));
    }

    let truth: BTreeMap<PaperId, f64> = (0..shape.n)
        .map(PaperId)
        .zip(sample_true_scores(
            &prior,
            shape.n as usize,
            &mut RngStream::new(seed, STREAM_TRUTH),
        ))
        .collect();

    let mut strat_rng = RngStream::new(seed, STREAM_STRATEGIES);
    let strategies: BTreeMap<EvaluatorId, EvaluatorStrategy> = plan
        .per_evaluator
        .keys()
        .map(|&e| (e, strategy_prior.sample(&mut strat_rng)))
        .collect();

    let mut noise_rng = RngStream::new(seed, STREAM_OTHER_NOISE);
    let other_noise: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = plan
        .per_evaluator
        .iter()
        .map(|(&e, bundle)| {
            let draws: BTreeMap<PaperId, f64> = bundle
                .probes
                .iter()
                .chain(bundle.nonprobes.iter())
                .map(|&p| (p, noise_rng.standard_normal()))
                .collect();
            (e, draws)
        })
        .collect();

    Ok(FrozenEnvironment {
        seed,
        shape,
        prior,
        plan,
        truth,
        strategies,
        other_noise,
        target,
        estimation: EstimationConfig::default(),
    })
}

/// What the expectation in a sweep integrates over, beyond the target's
/// own reporting noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditioningMode {
    /// True scores stay frozen with the rest of the environment.
    #[serde(rename = "own-noise")]
    OwnNoise,
    /// True scores are redrawn each replica (other evaluators' standardized
    /// noise stays frozen; their reports track the new scores).
    #[serde(rename = "own-noise-y")]
    OwnNoiseAndTruth,
}

/// Regrade-off diagnostic: score welfare against the actual true score with
/// no regrading, instead of the regrade-aware reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WelfareMode {
    RegradeAware,
    AgainstTruth,
}

/// One frozen-environment replica: redraw the target's own noise (stream
/// `noise_stream`), rebuild all reports, run the pipeline, and return the
/// target's total transfer at `alpha`.
///
/// With common random numbers, callers pass the same `noise_stream` for a
/// replica across grid points, so the target's standardized draws are
/// identical and utility differences come only from the strategy.
pub fn replica_utility(
    env: &FrozenEnvironment,
    target_strategy: &EvaluatorStrategy,
    mode: ConditioningMode,
    welfare_mode: WelfareMode,
    replica: u64,
    alpha: f64,
) -> Result<f64, SimError> {
    let truth = match mode {
        ConditioningMode::OwnNoise => env.truth.clone(),
        ConditioningMode::OwnNoiseAndTruth => {
            let mut rng = RngStream::new(env.seed, STREAM_TRUTH_REDRAW_BASE + replica);
            (0..env.shape.n)
                .map(PaperId)
                .zip(sample_true_scores(&env.prior, env.shape.n as usize, &mut rng))
                .collect()
        }
    };

    let mut noise_rng = RngStream::new(env.seed, STREAM_TARGET_NOISE_BASE + replica);
    let target_bundle = &env.plan.per_evaluator[&env.target];
    let target_noise: BTreeMap<PaperId, f64> = target_bundle
        .probes
        .iter()
        .chain(target_bundle.nonprobes.iter())
        .map(|&p| (p, noise_rng.standard_normal()))
        .collect();

    let mut reports: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = BTreeMap::new();
    for (&e, bundle) in &env.plan.per_evaluator {
        let (strategy, noise) = if e == env.target {
            (target_strategy, &target_noise)
        } else {
            (&env.strategies[&e], &env.other_noise[&e])
        };
        let mine: BTreeMap<PaperId, f64> = bundle
            .probes
            .iter()
            .chain(bundle.nonprobes.iter())
            .map(|&p| (p, report_from_standardized(truth[&p], strategy, noise[&p])))
            .collect();
        reports.insert(e, mine);
    }

    let outcome = score_pipeline(env, &truth, &reports, welfare_mode, alpha)?;
    Ok(outcome.sheet.totals[&env.target])
}

/// Scored exam: resolved records plus the transfer sheet.
#[derive(Debug, Clone)]
pub struct ExamOutcome {
    pub records: Vec<PaperScoreRecord>,
    pub sheet: TransferSheet,
    pub params: BTreeMap<EvaluatorId, EstimatedParams>,
}

fn score_pipeline(
    env: &FrozenEnvironment,
    truth: &BTreeMap<PaperId, f64>,
    reports: &BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    welfare_mode: WelfareMode,
    alpha: f64,
) -> Result<ExamOutcome, SimError> {
    run_scoring(
        &env.plan,
        &env.prior,
        &env.estimation,
        truth,
        reports,
        welfare_mode,
        alpha,
    )
}

/// Run estimation, aggregation, regrading, and transfers for one concrete
/// set of reports with known ground truth.
pub fn run_scoring(
    plan: &AssignmentPlan,
    prior: &Prior,
    estimation: &EstimationConfig,
    truth: &BTreeMap<PaperId, f64>,
    reports: &BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    welfare_mode: WelfareMode,
    alpha: f64,
) -> Result<ExamOutcome, SimError> {
    let probe_truth: BTreeMap<PaperId, f64> = plan
        .probe_ids
        .iter()
        .map(|&p| (p, truth[&p]))
        .collect();

    let mut params = BTreeMap::new();
    for (&e, bundle) in &plan.per_evaluator {
        let mine = &reports[&e];
        let on_probes: BTreeMap<PaperId, f64> =
            bundle.probes.iter().map(|&p| (p, mine[&p])).collect();
        let sub_truth: BTreeMap<PaperId, f64> = bundle
            .probes
            .iter()
            .map(|&p| (p, probe_truth[&p]))
            .collect();
        params.insert(e, estimate_params(&on_probes, &sub_truth, estimation)?);
    }

    let records = score_papers(plan, reports, &params, prior, &probe_truth)?;
    let (records, sheet) = match welfare_mode {
        WelfareMode::RegradeAware => {
            let resolved = resolve_regrades(records, truth, RegradePolicy::RationalCandidate)?;
            let sheet = transfers_with(
                plan,
                &resolved,
                &params,
                prior,
                alpha,
                ReferencePolicy::Assumed,
            )?;
            (resolved, sheet)
        }
        WelfareMode::AgainstTruth => {
            let resolved = resolve_regrades(records, truth, RegradePolicy::NoRegrades)?;
            let sheet = transfers_with(
                plan,
                &resolved,
                &params,
                prior,
                alpha,
                ReferencePolicy::TrueScore(truth),
            )?;
            (resolved, sheet)
        }
    };
    Ok(ExamOutcome {
        records,
        sheet,
        params,
    })
}

/// One fully fresh exam draw (truth, strategies, noise all redrawn) on a
/// fixed plan; returns the sum of all evaluator transfers at `alpha`.
/// Used by budget estimation, where the expectation runs over everything.
pub fn total_payout_replica(
    plan: &AssignmentPlan,
    prior: &Prior,
    strategy_prior: &StrategyPrior,
    alpha: f64,
    seed: u64,
    replica: u64,
) -> Result<f64, SimError> {
    let base = STREAM_BUDGET_BASE + replica * 4;
    let truth: BTreeMap<PaperId, f64> = (0..plan.n_papers)
        .map(PaperId)
        .zip(sample_true_scores(
            prior,
            plan.n_papers as usize,
            &mut RngStream::new(seed, base),
        ))
        .collect();
    let mut strat_rng = RngStream::new(seed, base + 1);
    let mut noise_rng = RngStream::new(seed, base + 2);
    let mut reports: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = BTreeMap::new();
    for (&e, bundle) in &plan.per_evaluator {
        let strategy = strategy_prior.sample(&mut strat_rng);
        let mine: BTreeMap<PaperId, f64> = bundle
            .probes
            .iter()
            .chain(bundle.nonprobes.iter())
            .map(|&p| {
                (
                    p,
                    report_from_standardized(truth[&p], &strategy, noise_rng.standard_normal()),
                )
            })
            .collect();
        reports.insert(e, mine);
    }
    let outcome = run_scoring(
        plan,
        prior,
        &EstimationConfig::default(),
        &truth,
        &reports,
        WelfareMode::RegradeAware,
        alpha,
    )?;
    Ok(outcome.sheet.totals.values().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_env(seed: u64) -> FrozenEnvironment {
        build_environment(
            SimShape {
                n: 12,
                m: 4,
                ell: 4,
                k: 4,
            },
            Prior::new(50.0, 0.01).unwrap(),
            &StrategyPrior::default(),
            EvaluatorId(1),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn strategy_prior_samples_inside_support() {
        let prior = StrategyPrior::default();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..500 {
            let s = prior.sample(&mut rng);
            assert!((0.05..=5.0).contains(&s.reliability));
            assert!(s.bias.is_finite());
        }
    }

    #[test]
    fn environment_is_reproducible() {
        let a = small_env(21);
        let b = small_env(21);
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.other_noise, b.other_noise);
    }

    #[test]
    fn replica_utility_is_deterministic_per_replica_and_varies_across() {
        let env = small_env(22);
        let s = EvaluatorStrategy::new(1.0, 1.0).unwrap();
        let u0 = replica_utility(&env, &s, ConditioningMode::OwnNoise, WelfareMode::RegradeAware, 0, 1.0)
            .unwrap();
        let u0_again =
            replica_utility(&env, &s, ConditioningMode::OwnNoise, WelfareMode::RegradeAware, 0, 1.0)
                .unwrap();
        assert_eq!(u0, u0_again);
        let u1 = replica_utility(&env, &s, ConditioningMode::OwnNoise, WelfareMode::RegradeAware, 1, 1.0)
            .unwrap();
        assert_ne!(u0, u1);
    }

    #[test]
    fn bias_shift_does_not_move_replica_utility() {
        let env = small_env(23);
        for replica in 0..8 {
            let base = replica_utility(
                &env,
                &EvaluatorStrategy::new(0.0, 1.3).unwrap(),
                ConditioningMode::OwnNoise,
                WelfareMode::RegradeAware,
                replica,
                1.0,
            )
            .unwrap();
            for b in [-6.0, 2.5, 40.0] {
                let shifted = replica_utility(
                    &env,
                    &EvaluatorStrategy::new(b, 1.3).unwrap(),
                    ConditioningMode::OwnNoise,
                    WelfareMode::RegradeAware,
                    replica,
                    1.0,
                )
                .unwrap();
                assert!(
                    (base - shifted).abs() < 1e-9,
                    "replica {replica} b {b}: {base} vs {shifted}"
                );
            }
        }
    }

    #[test]
    fn truth_redraw_mode_changes_utility_but_stays_reproducible() {
        let env = small_env(24);
        let s = EvaluatorStrategy::new(0.5, 2.0).unwrap();
        let frozen = replica_utility(&env, &s, ConditioningMode::OwnNoise, WelfareMode::RegradeAware, 3, 1.0)
            .unwrap();
        let redrawn = replica_utility(
            &env,
            &s,
            ConditioningMode::OwnNoiseAndTruth,
            WelfareMode::RegradeAware,
            3,
            1.0,
        )
        .unwrap();
        assert_ne!(frozen, redrawn);
        let redrawn_again = replica_utility(
            &env,
            &s,
            ConditioningMode::OwnNoiseAndTruth,
            WelfareMode::RegradeAware,
            3,
            1.0,
        )
        .unwrap();
        assert_eq!(redrawn, redrawn_again);
    }

    #[test]
    fn total_payout_scales_linearly_in_alpha() {
        let mut rng = RngStream::new(30, 0);
        let plan = build_partial_assignment(20, 6, 6, 4, &mut rng).unwrap();
        let prior = Prior::new(50.0, 0.01).unwrap();
        let sp = StrategyPrior::default();
        for replica in 0..4 {
            let at1 = total_payout_replica(&plan, &prior, &sp, 1.0, 9, replica).unwrap();
            let at3 = total_payout_replica(&plan, &prior, &sp, 3.0, 9, replica).unwrap();
            assert!((at3 - 3.0 * at1).abs() < 1e-9 * at1.abs().max(1.0));
        }
    }

    #[test]
    fn unknown_target_is_rejected() {
        let err = build_environment(
            SimShape {
                n: 12,
                m: 4,
                ell: 4,
                k: 4,
            },
            Prior::new(50.0, 0.01).unwrap(),
            &StrategyPrior::default(),
            EvaluatorId(99),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::UnknownTarget(_)));
    }
}
