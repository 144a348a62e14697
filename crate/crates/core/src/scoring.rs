//! Score aggregation, regrading, welfare, and evaluation transfers.
//!
//! Grades aggregate by an inverse-standard-deviation weighted de-biased
//! mean: each report is corrected by the evaluator's estimated bias, then
//! averaged with the prior mean using square-root-of-precision weights.
//! Candidates may contest a grade; a contested paper is instructor-graded
//! and the final grade is the max of aggregate and true score. Evaluators
//! are paid their marginal contribution to squared-error welfare.

use crate::assignment::{AssignmentPlan, EvaluatorId, PaperId};
use crate::estimation::EstimatedParams;
use crate::model::Prior;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("cannot aggregate an empty report set")]
    EmptyReports,
    #[error("no estimated parameters for evaluator {0}")]
    MissingParams(EvaluatorId),
    #[error("evaluator {0}: reports do not cover exactly the assigned bundle")]
    BundleMismatch(EvaluatorId),
    #[error("missing true score for paper {0}")]
    MissingTrueScore(PaperId),
    #[error("transfer scale alpha must be finite and > 0, got {0}")]
    BadAlpha(f64),
    #[error("non-finite report for paper {0}")]
    NonFinite(PaperId),
}

/// Inverse standard-deviation weighted de-biased mean:
/// `(sqrt(gamma)*mu + sum_i sqrt(tau_hat_i)*(report_i - b_hat_i)) /
///  (sqrt(gamma) + sum_i sqrt(tau_hat_i))`.
pub fn iswdm(
    reports: &BTreeMap<EvaluatorId, f64>,
    params: &BTreeMap<EvaluatorId, EstimatedParams>,
    prior: &Prior,
) -> Result<f64, ScoringError> {
    if reports.is_empty() {
        return Err(ScoringError::EmptyReports);
    }
    let root_gamma = prior.gamma.sqrt();
    let mut num = root_gamma * prior.mu;
    let mut den = root_gamma;
    for (&e, &report) in reports {
        let p = params.get(&e).ok_or(ScoringError::MissingParams(e))?;
        let w = p.tau_hat.sqrt();
        num += w * (report - p.b_hat);
        den += w;
    }
    Ok(num / den)
}

/// One paper's reports and grades as the mechanism sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperScoreRecord {
    pub paper_id: PaperId,
    pub reports: BTreeMap<EvaluatorId, f64>,
    /// Aggregated grade r*; prior mean when nobody graded the paper.
    pub aggregated: f64,
    /// Known only for probes and regraded papers.
    pub true_score: Option<f64>,
    pub regraded: bool,
    pub final_grade: f64,
    pub is_probe: bool,
}

/// Build score records for every paper in the plan. Probe papers take the
/// instructor grade as final; regular papers aggregate evaluator reports,
/// falling back to the prior mean when uncovered. Each evaluator's reports
/// must cover exactly their assigned bundle.
pub fn score_papers(
    plan: &AssignmentPlan,
    reports_by_evaluator: &BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    params: &BTreeMap<EvaluatorId, EstimatedParams>,
    prior: &Prior,
    probe_truth: &BTreeMap<PaperId, f64>,
) -> Result<Vec<PaperScoreRecord>, ScoringError> {
    for (&e, bundle) in &plan.per_evaluator {
        let reports = reports_by_evaluator
            .get(&e)
            .ok_or(ScoringError::BundleMismatch(e))?;
        let expected: BTreeMap<&PaperId, ()> = bundle
            .probes
            .iter()
            .chain(bundle.nonprobes.iter())
            .map(|p| (p, ()))
            .collect();
        if reports.len() != expected.len() || !reports.keys().all(|p| expected.contains_key(p)) {
            return Err(ScoringError::BundleMismatch(e));
        }
        for (&p, &r) in reports {
            if !r.is_finite() {
                return Err(ScoringError::NonFinite(p));
            }
        }
    }

    let mut per_paper: BTreeMap<PaperId, BTreeMap<EvaluatorId, f64>> = BTreeMap::new();
    for (&e, reports) in reports_by_evaluator {
        for (&p, &r) in reports {
            per_paper.entry(p).or_default().insert(e, r);
        }
    }

    let mut records = Vec::with_capacity(plan.n_papers as usize);
    for raw in 0..plan.n_papers {
        let paper = PaperId(raw);
        let reports = per_paper.remove(&paper).unwrap_or_default();
        let aggregated = if reports.is_empty() {
            prior.mu
        } else {
            iswdm(&reports, params, prior)?
        };
        let is_probe = plan.is_probe(paper);
        let (true_score, final_grade) = if is_probe {
            let y = *probe_truth
                .get(&paper)
                .ok_or(ScoringError::MissingTrueScore(paper))?;
            (Some(y), y)
        } else {
            (None, aggregated)
        };
        records.push(PaperScoreRecord {
            paper_id: paper,
            reports,
            aggregated,
            true_score,
            regraded: false,
            final_grade,
            is_probe,
        });
    }
    Ok(records)
}

/// How candidates decide whether to contest their aggregated grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegradePolicy {
    /// Contest exactly when the true score is strictly above the aggregate
    /// (a correct contest can only raise the grade; ties stand).
    RationalCandidate,
    /// Nobody contests; aggregates stand as final.
    NoRegrades,
}

/// Apply regrade decisions to regular papers. Under
/// [`RegradePolicy::RationalCandidate`] the paper is regraded iff its true
/// score exceeds the aggregate, and the final grade becomes
/// `max(aggregate, true)`; `true_scores` must then cover every regular
/// paper. Probe records pass through untouched.
pub fn resolve_regrades(
    records: Vec<PaperScoreRecord>,
    true_scores: &BTreeMap<PaperId, f64>,
    policy: RegradePolicy,
) -> Result<Vec<PaperScoreRecord>, ScoringError> {
    records
        .into_iter()
        .map(|mut rec| {
            if rec.is_probe || policy == RegradePolicy::NoRegrades {
                return Ok(rec);
            }
            let y = *true_scores
                .get(&rec.paper_id)
                .ok_or(ScoringError::MissingTrueScore(rec.paper_id))?;
            if y > rec.aggregated {
                rec.regraded = true;
                rec.true_score = Some(y);
                rec.final_grade = y;
            } else {
                rec.regraded = false;
                rec.final_grade = rec.aggregated;
            }
            Ok(rec)
        })
        .collect()
}

/// Squared-error social welfare of assigning `aggregate` when the score is
/// taken to be `reference`: `-(aggregate - reference)^2`.
pub fn welfare(aggregate: f64, reference: f64) -> f64 {
    -(aggregate - reference).powi(2)
}

/// Welfare with everyone (`with_all` = W*) and with each grader removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareRecord {
    pub with_all: f64,
    pub without: BTreeMap<EvaluatorId, f64>,
}

/// Which score the welfare comparison treats as true.
#[derive(Debug, Clone, Copy)]
pub enum ReferencePolicy<'a> {
    /// Regraded papers use the revealed true score; uncontested papers use
    /// the aggregate itself (the mechanism assumes it is correct, making
    /// W* = 0 there).
    Assumed,
    /// Always use the actual true score (diagnostic mode; needs ground
    /// truth for every regular paper).
    TrueScore(&'a BTreeMap<PaperId, f64>),
}

/// Evaluation payments: `t_i^j = alpha * (W_j* - W_j^(-i)*)` for each
/// evaluator `i` and each regular paper `j` they graded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSheet {
    pub alpha: f64,
    /// evaluator → paper → transfer for that paper.
    pub per_paper: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>>,
    /// evaluator → summed transfer, in sorted paper order.
    pub totals: BTreeMap<EvaluatorId, f64>,
}

impl TransferSheet {
    pub fn get(&self, evaluator: EvaluatorId, paper: PaperId) -> Option<f64> {
        self.per_paper.get(&evaluator)?.get(&paper).copied()
    }
}

fn reference_for(rec: &PaperScoreRecord, policy: &ReferencePolicy) -> Result<f64, ScoringError> {
    match policy {
        ReferencePolicy::Assumed => Ok(if rec.regraded {
            rec.true_score.expect("regraded record has true score")
        } else {
            rec.aggregated
        }),
        ReferencePolicy::TrueScore(truth) => truth
            .get(&rec.paper_id)
            .copied()
            .ok_or(ScoringError::MissingTrueScore(rec.paper_id)),
    }
}

/// Welfare with and without each grader, for every covered regular paper.
pub fn welfare_records(
    plan: &AssignmentPlan,
    records: &[PaperScoreRecord],
    params: &BTreeMap<EvaluatorId, EstimatedParams>,
    prior: &Prior,
    policy: ReferencePolicy,
) -> Result<BTreeMap<PaperId, WelfareRecord>, ScoringError> {
    let by_id: BTreeMap<PaperId, &PaperScoreRecord> =
        records.iter().map(|r| (r.paper_id, r)).collect();
    let mut out = BTreeMap::new();
    for (paper, graders) in plan.graders() {
        let rec = *by_id
            .get(&paper)
            .ok_or(ScoringError::MissingTrueScore(paper))?;
        let reference = reference_for(rec, &policy)?;
        let with_all = welfare(rec.aggregated, reference);
        let mut without = BTreeMap::new();
        for &i in &graders {
            let mut rest = rec.reports.clone();
            rest.remove(&i);
            let r_minus = if rest.is_empty() {
                prior.mu
            } else {
                iswdm(&rest, params, prior)?
            };
            without.insert(i, welfare(r_minus, reference));
        }
        out.insert(paper, WelfareRecord { with_all, without });
    }
    Ok(out)
}

/// Compute the transfer sheet from resolved score records, using the
/// standard regrade-aware welfare reference.
pub fn transfers(
    plan: &AssignmentPlan,
    records: &[PaperScoreRecord],
    params: &BTreeMap<EvaluatorId, EstimatedParams>,
    prior: &Prior,
    alpha: f64,
) -> Result<TransferSheet, ScoringError> {
    transfers_with(plan, records, params, prior, alpha, ReferencePolicy::Assumed)
}

/// [`transfers`] with an explicit welfare reference policy.
pub fn transfers_with(
    plan: &AssignmentPlan,
    records: &[PaperScoreRecord],
    params: &BTreeMap<EvaluatorId, EstimatedParams>,
    prior: &Prior,
    alpha: f64,
    policy: ReferencePolicy,
) -> Result<TransferSheet, ScoringError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ScoringError::BadAlpha(alpha));
    }
    let records_by_paper = welfare_records(plan, records, params, prior, policy)?;

    let mut per_paper: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = plan
        .per_evaluator
        .keys()
        .map(|&e| (e, BTreeMap::new()))
        .collect();
    for (&paper, w) in &records_by_paper {
        for (&i, &without) in &w.without {
            let t = alpha * (w.with_all - without);
            per_paper.get_mut(&i).unwrap().insert(paper, t);
        }
    }
    let totals = per_paper
        .iter()
        .map(|(&e, by_paper)| (e, by_paper.values().sum::<f64>()))
        .collect();
    Ok(TransferSheet {
        alpha,
        per_paper,
        totals,
    })
}

/// Flatten records and transfers to CSV with the fixed column order
/// `paper_id,evaluator_id,report,r_star,final,t`. One row per report;
/// probe rows leave `t` empty.
pub fn scores_to_csv(records: &[PaperScoreRecord], sheet: &TransferSheet) -> String {
    let mut out = String::from("paper_id,evaluator_id,report,r_star,final,t\n");
    let mut sorted: Vec<&PaperScoreRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.paper_id);
    for rec in sorted {
        for (&e, &report) in &rec.reports {
            let t = sheet
                .get(e, rec.paper_id)
                .map(|t| t.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.paper_id, e, report, rec.aggregated, rec.final_grade, t
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{build_assignment, EvaluatorBundle};
    use crate::estimation::{estimate_params, EstimationConfig};
    use crate::model::{sample_report, sample_true_scores, EvaluatorStrategy};
    use crate::rng::RngStream;
    use std::collections::BTreeSet;

    fn params_map(entries: &[(u32, f64, f64)]) -> BTreeMap<EvaluatorId, EstimatedParams> {
        entries
            .iter()
            .map(|&(e, b_hat, tau_hat)| {
                (
                    EvaluatorId(e),
                    EstimatedParams {
                        b_hat,
                        tau_hat,
                        probe_count: 2,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn iswdm_single_evaluator_example() {
        let prior = Prior::new(50.0, 1.0).unwrap();
        let reports = BTreeMap::from([(EvaluatorId(0), 62.0)]);
        let params = params_map(&[(0, 2.0, 4.0)]);
        let r = iswdm(&reports, &params, &prior).unwrap();
        assert!((r - 170.0 / 3.0).abs() < 1e-12); // (50 + 2*60)/3
    }

    #[test]
    fn iswdm_is_fixed_at_prior_mean_when_all_debiased_reports_equal_it() {
        let prior = Prior::new(50.0, 0.3).unwrap();
        let reports = BTreeMap::from([
            (EvaluatorId(0), 52.0),
            (EvaluatorId(1), 49.0),
            (EvaluatorId(2), 50.0),
        ]);
        let params = params_map(&[(0, 2.0, 4.0), (1, -1.0, 0.7), (2, 0.0, 9.0)]);
        let r = iswdm(&reports, &params, &prior).unwrap();
        assert!((r - 50.0).abs() < 1e-12);
    }

    #[test]
    fn iswdm_vanishing_prior_returns_debiased_report() {
        let prior = Prior::new(50.0, 1e-18).unwrap();
        let reports = BTreeMap::from([(EvaluatorId(0), 62.0)]);
        let params = params_map(&[(0, 2.0, 4.0)]);
        let r = iswdm(&reports, &params, &prior).unwrap();
        assert!((r - 60.0).abs() < 1e-6);
    }

    #[test]
    fn iswdm_rejects_empty_and_unknown_reporters() {
        let prior = Prior::new(50.0, 1.0).unwrap();
        assert_eq!(
            iswdm(&BTreeMap::new(), &params_map(&[]), &prior),
            Err(ScoringError::EmptyReports)
        );
        let reports = BTreeMap::from([(EvaluatorId(3), 62.0)]);
        assert_eq!(
            iswdm(&reports, &params_map(&[(0, 0.0, 1.0)]), &prior),
            Err(ScoringError::MissingParams(EvaluatorId(3)))
        );
    }

    fn record(paper: u32, aggregated: f64, reports: &[(u32, f64)]) -> PaperScoreRecord {
        PaperScoreRecord {
            paper_id: PaperId(paper),
            reports: reports
                .iter()
                .map(|&(e, r)| (EvaluatorId(e), r))
                .collect(),
            aggregated,
            true_score: None,
            regraded: false,
            final_grade: aggregated,
            is_probe: false,
        }
    }

    #[test]
    fn regrade_rule_is_strict_max() {
        let records = vec![
            record(0, 58.0, &[]),
            record(1, 58.0, &[]),
            record(2, 58.0, &[]),
        ];
        let truth = BTreeMap::from([
            (PaperId(0), 60.0),
            (PaperId(1), 55.0),
            (PaperId(2), 58.0),
        ]);
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        assert!(resolved[0].regraded);
        assert_eq!(resolved[0].final_grade, 60.0);
        assert_eq!(resolved[0].true_score, Some(60.0));
        assert!(!resolved[1].regraded);
        assert_eq!(resolved[1].final_grade, 58.0);
        assert_eq!(resolved[1].true_score, None);
        // Tie: no regrade, final equals the aggregate (== y).
        assert!(!resolved[2].regraded);
        assert_eq!(resolved[2].final_grade, 58.0);
    }

    #[test]
    fn no_regrade_policy_passes_aggregates_through() {
        let records = vec![record(0, 40.0, &[])];
        let resolved =
            resolve_regrades(records, &BTreeMap::new(), RegradePolicy::NoRegrades).unwrap();
        assert!(!resolved[0].regraded);
        assert_eq!(resolved[0].final_grade, 40.0);
    }

    #[test]
    fn regrade_requires_ground_truth() {
        let records = vec![record(7, 40.0, &[])];
        assert_eq!(
            resolve_regrades(records, &BTreeMap::new(), RegradePolicy::RationalCandidate),
            Err(ScoringError::MissingTrueScore(PaperId(7)))
        );
    }

    #[test]
    fn welfare_examples() {
        assert_eq!(welfare(58.0, 60.0), -4.0);
        assert_eq!(welfare(63.25, 63.25), 0.0);
        assert!((welfare(170.0 / 3.0, 60.0) - (-100.0 / 9.0)).abs() < 1e-12);
        assert_eq!(welfare(58.0, 60.0), welfare(60.0, 58.0));
    }

    /// Two evaluators on one regular paper, built so the aggregate is
    /// exactly 58 with both and 170/3 without evaluator 1.
    fn two_grader_fixture() -> (
        AssignmentPlan,
        BTreeMap<EvaluatorId, EstimatedParams>,
        Prior,
        Vec<PaperScoreRecord>,
    ) {
        let plan = AssignmentPlan {
            n_papers: 3,
            k: 2,
            probe_ids: BTreeSet::from([PaperId(0), PaperId(1)]),
            per_evaluator: BTreeMap::from([
                (
                    EvaluatorId(0),
                    EvaluatorBundle {
                        probes: BTreeSet::from([PaperId(0)]),
                        nonprobes: BTreeSet::from([PaperId(2)]),
                        bundle_order: vec![PaperId(0), PaperId(2)],
                    },
                ),
                (
                    EvaluatorId(1),
                    EvaluatorBundle {
                        probes: BTreeSet::from([PaperId(1)]),
                        nonprobes: BTreeSet::from([PaperId(2)]),
                        bundle_order: vec![PaperId(2), PaperId(1)],
                    },
                ),
            ]),
        };
        let params = params_map(&[(0, 2.0, 4.0), (1, 0.0, 9.0)]);
        let prior = Prior::new(50.0, 1.0).unwrap();
        // r* = (50 + 2*60 + 3*(178/3)) / 6 = 58; without evaluator 1 it is
        // (50 + 2*60)/3 = 170/3; without evaluator 0 it is (50 + 178)/4 = 57.
        let rec = record(2, 58.0, &[(0, 62.0), (1, 178.0 / 3.0)]);
        (plan, params, prior, vec![rec])
    }

    #[test]
    fn transfer_on_regraded_paper_matches_hand_computation() {
        let (plan, params, prior, records) = two_grader_fixture();
        let truth = BTreeMap::from([(PaperId(2), 60.0)]);
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        let sheet = transfers(&plan, &resolved, &params, &prior, 1.0).unwrap();
        // W* = -(58-60)^2 = -4; without 1: -(170/3 - 60)^2 = -100/9.
        let t1 = sheet.get(EvaluatorId(1), PaperId(2)).unwrap();
        assert!((t1 - 64.0 / 9.0).abs() < 1e-9, "t1 = {t1}");
        // Without 0: -(57-60)^2 = -9, so t0 = -4 + 9 = 5.
        let t0 = sheet.get(EvaluatorId(0), PaperId(2)).unwrap();
        assert!((t0 - 5.0).abs() < 1e-9, "t0 = {t0}");
        assert!((sheet.totals[&EvaluatorId(1)] - 64.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_on_uncontested_paper_is_nonnegative_marginal_value() {
        let (plan, params, prior, records) = two_grader_fixture();
        let truth = BTreeMap::from([(PaperId(2), 55.0)]);
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        let sheet = transfers(&plan, &resolved, &params, &prior, 1.0).unwrap();
        // Reference is r* = 58: W* = 0, without 1 = -(170/3 - 58)^2 = -16/9.
        let t1 = sheet.get(EvaluatorId(1), PaperId(2)).unwrap();
        assert!((t1 - 16.0 / 9.0).abs() < 1e-9, "t1 = {t1}");
        assert!(t1 >= 0.0);
    }

    #[test]
    fn transfer_zero_when_report_matches_leave_one_out_aggregate() {
        let (plan, params, prior, _) = two_grader_fixture();
        // Evaluator 1's debiased report set exactly to r^(-1) = 170/3.
        let rec = record(2, 170.0 / 3.0, &[(0, 62.0), (1, 170.0 / 3.0)]);
        let truth = BTreeMap::from([(PaperId(2), 50.0)]);
        let resolved =
            resolve_regrades(vec![rec], &truth, RegradePolicy::RationalCandidate).unwrap();
        let sheet = transfers(&plan, &resolved, &params, &prior, 1.0).unwrap();
        let t1 = sheet.get(EvaluatorId(1), PaperId(2)).unwrap();
        assert!(t1.abs() < 1e-9, "t1 = {t1}");
    }

    #[test]
    fn alpha_scales_transfers_linearly_and_must_be_positive() {
        let (plan, params, prior, records) = two_grader_fixture();
        let truth = BTreeMap::from([(PaperId(2), 60.0)]);
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        let one = transfers(&plan, &resolved, &params, &prior, 1.0).unwrap();
        let three = transfers(&plan, &resolved, &params, &prior, 3.0).unwrap();
        for (e, total) in &one.totals {
            assert!((three.totals[e] - 3.0 * total).abs() < 1e-12);
        }
        assert_eq!(
            transfers(&plan, &resolved, &params, &prior, 0.0),
            Err(ScoringError::BadAlpha(0.0))
        );
        assert_eq!(
            transfers(&plan, &resolved, &params, &prior, -1.0),
            Err(ScoringError::BadAlpha(-1.0))
        );
    }

    #[test]
    fn leave_one_out_singleton_falls_back_to_prior_mean() {
        let plan = AssignmentPlan {
            n_papers: 3,
            k: 2,
            probe_ids: BTreeSet::from([PaperId(0), PaperId(1)]),
            per_evaluator: BTreeMap::from([(
                EvaluatorId(0),
                EvaluatorBundle {
                    probes: BTreeSet::from([PaperId(0)]),
                    nonprobes: BTreeSet::from([PaperId(2)]),
                    bundle_order: vec![PaperId(0), PaperId(2)],
                },
            )]),
        };
        let params = params_map(&[(0, 2.0, 4.0)]);
        let prior = Prior::new(50.0, 1.0).unwrap();
        let rec = record(2, 170.0 / 3.0, &[(0, 62.0)]);
        let truth = BTreeMap::from([(PaperId(2), 60.0)]);
        let resolved =
            resolve_regrades(vec![rec], &truth, RegradePolicy::RationalCandidate).unwrap();
        let w = welfare_records(&plan, &resolved, &params, &prior, ReferencePolicy::Assumed)
            .unwrap();
        // Removing the only grader leaves the prior mean 50.
        let rec_w = &w[&PaperId(2)];
        assert!((rec_w.without[&EvaluatorId(0)] - welfare(50.0, 60.0)).abs() < 1e-12);
        assert!(rec_w.with_all <= 0.0);
        assert!(rec_w.without.values().all(|&v| v <= 0.0));
    }

    #[test]
    fn score_papers_validates_bundles_and_falls_back_when_uncovered() {
        let mut rng = RngStream::new(5, 0);
        let plan = crate::assignment::build_partial_assignment(8, 1, 4, 4, &mut rng).unwrap();
        let prior = Prior::new(50.0, 0.5).unwrap();
        let params = params_map(&[(0, 0.0, 1.0)]);
        let bundle = &plan.per_evaluator[&EvaluatorId(0)];
        let probe_truth: BTreeMap<PaperId, f64> =
            plan.probe_ids.iter().map(|&p| (p, 70.0)).collect();

        let mut reports = BTreeMap::new();
        reports.insert(
            EvaluatorId(0),
            bundle
                .bundle_order
                .iter()
                .map(|&p| (p, 65.0))
                .collect::<BTreeMap<_, _>>(),
        );
        let records = score_papers(&plan, &reports, &params, &prior, &probe_truth).unwrap();
        assert_eq!(records.len(), 8);
        for rec in &records {
            if rec.is_probe {
                assert_eq!(rec.final_grade, 70.0);
                assert_eq!(rec.true_score, Some(70.0));
            } else if rec.reports.is_empty() {
                assert_eq!(rec.aggregated, 50.0); // uncovered → prior mean
            }
        }

        // Dropping one paper from the report set must be rejected.
        let mut short = reports.clone();
        let victim = *bundle.bundle_order.first().unwrap();
        short.get_mut(&EvaluatorId(0)).unwrap().remove(&victim);
        assert_eq!(
            score_papers(&plan, &short, &params, &prior, &probe_truth),
            Err(ScoringError::BundleMismatch(EvaluatorId(0)))
        );
    }

    /// Full small pipeline: draw, estimate, score, resolve, pay. Then shift
    /// every report of one evaluator by a constant and check nothing
    /// downstream moves.
    fn run_pipeline(
        shift_evaluator: Option<(EvaluatorId, f64)>,
    ) -> (Vec<PaperScoreRecord>, TransferSheet) {
        let mut rng = RngStream::new(99, 0);
        let plan = build_assignment(12, 4, 4, 4, 1, &mut rng).unwrap();
        let prior = Prior::new(50.0, 0.01).unwrap();
        let truth: BTreeMap<PaperId, f64> = (0..12)
            .map(PaperId)
            .zip(sample_true_scores(&prior, 12, &mut rng))
            .collect();
        let strategies: BTreeMap<EvaluatorId, EvaluatorStrategy> = (0..4)
            .map(|e| {
                (
                    EvaluatorId(e),
                    EvaluatorStrategy::new(e as f64 - 1.5, 0.5 + e as f64).unwrap(),
                )
            })
            .collect();

        let mut reports: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = BTreeMap::new();
        for (&e, bundle) in &plan.per_evaluator {
            let mut mine = BTreeMap::new();
            for &p in &bundle.bundle_order {
                let mut v = sample_report(truth[&p], &strategies[&e], &mut rng).value;
                if let Some((target, c)) = shift_evaluator {
                    if target == e {
                        v += c;
                    }
                }
                mine.insert(p, v);
            }
            reports.insert(e, mine);
        }

        let probe_truth: BTreeMap<PaperId, f64> = plan
            .probe_ids
            .iter()
            .map(|&p| (p, truth[&p]))
            .collect();
        let params: BTreeMap<EvaluatorId, EstimatedParams> = plan
            .per_evaluator
            .iter()
            .map(|(&e, bundle)| {
                let on_probes: BTreeMap<PaperId, f64> = bundle
                    .probes
                    .iter()
                    .map(|&p| (p, reports[&e][&p]))
                    .collect();
                let sub_truth: BTreeMap<PaperId, f64> = bundle
                    .probes
                    .iter()
                    .map(|&p| (p, probe_truth[&p]))
                    .collect();
                (
                    e,
                    estimate_params(&on_probes, &sub_truth, &EstimationConfig::default()).unwrap(),
                )
            })
            .collect();

        let records = score_papers(&plan, &reports, &params, &prior, &probe_truth).unwrap();
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        let sheet = transfers(&plan, &resolved, &params, &prior, 2.0).unwrap();
        (resolved, sheet)
    }

    #[test]
    fn shifting_one_evaluators_reports_changes_nothing_downstream() {
        let (base_records, base_sheet) = run_pipeline(None);
        for c in [-25.0, 0.75, 13.0] {
            let (records, sheet) = run_pipeline(Some((EvaluatorId(2), c)));
            for (a, b) in base_records.iter().zip(&records) {
                assert!((a.aggregated - b.aggregated).abs() < 1e-9);
                assert!((a.final_grade - b.final_grade).abs() < 1e-9);
                assert_eq!(a.regraded, b.regraded);
            }
            for (e, total) in &base_sheet.totals {
                assert!(
                    (sheet.totals[e] - total).abs() < 1e-9,
                    "evaluator {e} moved by {}",
                    (sheet.totals[e] - total).abs()
                );
            }
        }
    }

    #[test]
    fn csv_has_fixed_column_order() {
        let (plan, params, prior, records) = two_grader_fixture();
        let truth = BTreeMap::from([(PaperId(2), 60.0)]);
        let resolved =
            resolve_regrades(records, &truth, RegradePolicy::RationalCandidate).unwrap();
        let sheet = transfers(&plan, &resolved, &params, &prior, 1.0).unwrap();
        let csv = scores_to_csv(&resolved, &sheet);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "paper_id,evaluator_id,report,r_star,final,t"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("2,0,62,58,60,"));
    }
}
