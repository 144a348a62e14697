//! Randomized invariants: plan validity over feasible shapes, estimator
//! shift equivariance, aggregation bounds, regrade monotonicity, and
//! non-negative transfers when nothing is regraded.

use peercert_core::assignment::{
    build_assignment, build_partial_assignment, validate_partial_plan, validate_plan,
    AssignmentPlan, EvaluatorId, PaperId,
};
use peercert_core::estimation::{estimate_params, EstimatedParams, EstimationConfig};
use peercert_core::model::Prior;
use peercert_core::rng::RngStream;
use peercert_core::scoring::{
    iswdm, resolve_regrades, score_papers, transfers, RegradePolicy,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

/// (n, m, ell, k, coverage) meeting every strict-feasibility constraint.
fn feasible_shape() -> impl Strategy<Value = (u32, u32, u32, u32, u32)> {
    (1u32..=4, 0u32..=5, 0u32..=6, 1u32..=3, 0u32..=3).prop_map(
        |(k_half, ell_extra, reg_extra, coverage, m_extra)| {
            let k = 2 * k_half;
            let ell = k_half + ell_extra;
            let regulars = k_half + reg_extra;
            let n = ell + regulars;
            let m = (coverage * regulars).div_ceil(k_half).max(1) + m_extra;
            (n, m, ell, k, coverage)
        },
    )
}

/// A full random exam: partial plan, truths, biased noisy reports, and the
/// probe-calibrated parameter estimates.
#[allow(clippy::type_complexity)]
fn random_exam(
    n: u32,
    m: u32,
    ell: u32,
    seed: u64,
) -> (
    AssignmentPlan,
    BTreeMap<PaperId, f64>,
    BTreeMap<PaperId, f64>,
    BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    BTreeMap<EvaluatorId, EstimatedParams>,
    Prior,
) {
    let mut plan_rng = RngStream::new(seed, 0);
    let plan = build_partial_assignment(n, m, ell, 4, &mut plan_rng).expect("feasible");
    let prior = Prior::new(60.0, 0.02).unwrap();

    let mut draw = RngStream::new(seed, 1);
    let truth: BTreeMap<PaperId, f64> = (0..n)
        .map(|p| (PaperId(p), 60.0 + 12.0 * draw.standard_normal()))
        .collect();
    let probe_truth: BTreeMap<PaperId, f64> = plan
        .probe_ids
        .iter()
        .map(|&p| (p, truth[&p]))
        .collect();

    let mut reports = BTreeMap::new();
    let mut params = BTreeMap::new();
    for (&e, bundle) in &plan.per_evaluator {
        let bias = 3.0 * draw.standard_normal();
        let sigma = 0.5 + 1.5 * (0.5 + 0.5 * draw.standard_normal()).clamp(0.0, 1.0);
        let mine: BTreeMap<PaperId, f64> = bundle
            .probes
            .iter()
            .chain(bundle.nonprobes.iter())
            .map(|&p| (p, truth[&p] + bias + sigma * draw.standard_normal()))
            .collect();
        let on_probes: BTreeMap<PaperId, f64> =
            bundle.probes.iter().map(|&p| (p, mine[&p])).collect();
        let sub_truth: BTreeMap<PaperId, f64> =
            bundle.probes.iter().map(|&p| (p, truth[&p])).collect();
        params.insert(
            e,
            estimate_params(&on_probes, &sub_truth, &EstimationConfig::default()).unwrap(),
        );
        reports.insert(e, mine);
    }
    (plan, truth, probe_truth, reports, params, prior)
}

proptest! {
    #[test]
    fn built_plans_always_validate((n, m, ell, k, coverage) in feasible_shape(), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let plan = build_assignment(n, m, ell, k, coverage, &mut rng).expect("feasible shape");
        validate_plan(&plan, coverage).expect("built plan is valid");
        prop_assert_eq!(plan.ell(), ell);
        prop_assert_eq!(plan.m(), m);
        prop_assert_eq!(plan.n_papers, n);
    }

    #[test]
    fn partial_plans_always_validate(
        k_half in 1u32..=3,
        ell_extra in 0u32..=4,
        reg_extra in 0u32..=5,
        m in 1u32..=8,
        seed in any::<u64>(),
    ) {
        let k = 2 * k_half;
        let ell = k_half + ell_extra;
        let n = ell + k_half + reg_extra;
        let mut rng = RngStream::new(seed, 0);
        let plan = build_partial_assignment(n, m, ell, k, &mut rng).expect("pools suffice");
        validate_partial_plan(&plan).expect("partial plan is valid");
    }

    #[test]
    fn estimation_is_shift_equivariant(
        pairs in prop::collection::vec(((-100.0..100.0f64), (-50.0..50.0f64)), 2..12),
        shift in -1000.0..1000.0f64,
    ) {
        let truth: BTreeMap<PaperId, f64> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, _))| (PaperId(i as u32), t))
            .collect();
        let reports: BTreeMap<PaperId, f64> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, e))| (PaperId(i as u32), t + e))
            .collect();
        let shifted: BTreeMap<PaperId, f64> =
            reports.iter().map(|(&p, &r)| (p, r + shift)).collect();
        let cfg = EstimationConfig::default();
        let base = estimate_params(&reports, &truth, &cfg).unwrap();
        let moved = estimate_params(&shifted, &truth, &cfg).unwrap();
        prop_assert!((moved.b_hat - (base.b_hat + shift)).abs() < 1e-6);
        let rel = (moved.tau_hat - base.tau_hat).abs() / base.tau_hat.max(1e-12);
        prop_assert!(rel < 1e-6, "tau moved: {} vs {}", base.tau_hat, moved.tau_hat);
        prop_assert_eq!(moved.probe_count, base.probe_count);
    }

    #[test]
    fn aggregate_stays_between_prior_and_debiased_reports(
        entries in prop::collection::vec(
            ((-50.0..150.0f64), (-10.0..10.0f64), (0.01..100.0f64)),
            1..5,
        ),
        mu in 0.0..100.0f64,
        gamma in 1e-6..10.0f64,
    ) {
        let prior = Prior::new(mu, gamma).unwrap();
        let mut reports = BTreeMap::new();
        let mut params = BTreeMap::new();
        let mut bounds = vec![mu];
        for (i, &(report, b_hat, tau_hat)) in entries.iter().enumerate() {
            let e = EvaluatorId(i as u32);
            reports.insert(e, report);
            params.insert(e, EstimatedParams { b_hat, tau_hat, probe_count: 2 });
            bounds.push(report - b_hat);
        }
        let r = iswdm(&reports, &params, &prior).unwrap();
        let lo = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = bounds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r >= lo - 1e-9 && r <= hi + 1e-9, "r={r} outside [{lo}, {hi}]");
    }

    #[test]
    fn regrades_only_raise_and_only_strictly(
        n in 5u32..9,
        m in 2u32..5,
        seed in any::<u64>(),
    ) {
        let (plan, truth, probe_truth, reports, params, prior) = random_exam(n, m, 2, seed);
        let records = score_papers(&plan, &reports, &params, &prior, &probe_truth).unwrap();
        let resolved = resolve_regrades(records.clone(), &truth, RegradePolicy::RationalCandidate).unwrap();
        for (before, after) in records.iter().zip(&resolved) {
            if before.is_probe {
                prop_assert_eq!(before, after);
                continue;
            }
            let y = truth[&before.paper_id];
            prop_assert!(after.final_grade >= before.aggregated);
            prop_assert_eq!(after.regraded, y > before.aggregated);
            prop_assert_eq!(after.final_grade, before.aggregated.max(y));
        }
    }

    #[test]
    fn transfers_are_nonnegative_without_regrades(
        n in 5u32..9,
        m in 2u32..5,
        seed in any::<u64>(),
        alpha in 0.1..10.0f64,
    ) {
        let (plan, _, probe_truth, reports, params, prior) = random_exam(n, m, 2, seed);
        let records = score_papers(&plan, &reports, &params, &prior, &probe_truth).unwrap();
        let records = resolve_regrades(records, &BTreeMap::new(), RegradePolicy::NoRegrades).unwrap();
        let sheet = transfers(&plan, &records, &params, &prior, alpha).unwrap();
        for (e, per_paper) in &sheet.per_paper {
            let mut sum = 0.0;
            for (&p, &t) in per_paper {
                prop_assert!(t >= -1e-9, "evaluator {e:?} paper {p:?}: t = {t}");
                sum += t;
            }
            prop_assert!((sum - sheet.totals[e]).abs() < 1e-9);
        }
    }
}
