//! Deterministic, tamper-evident exam ledger: roles, wallets, escrow, the
//! phased exam lifecycle, payouts, and certificate queries. Commands
//! validate against current state and append events to a hash-chained log;
//! state is the pure fold of that log, so replaying the log reproduces the
//! terminal state byte for byte.

pub mod event;
pub mod log;
pub mod state;

pub use event::{
    Event, ExamId, ExamSettings, PayoutLine, PayoutReport, Phase, Role, ScoreRelease, UserId,
};
pub use log::{verify_chain, ChainError, EventLog, LogRecord, GENESIS_PREV_HASH};
pub use state::{ExamContract, LedgerState, RegradeStatus, Wallet};

use crate::assignment::{build_assignment, AssignmentError, EvaluatorId, PaperId};
use crate::config::ExamConfig;
use crate::estimation::{estimate_params, EstimationError};
use crate::rng::RngStream;
use crate::scoring::{transfers, ScoringError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Stream id the assignment plan is drawn from, given an exam's seed.
const PLAN_STREAM: u64 = 0;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("user {0} already exists")]
    DuplicateUser(UserId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown exam {0}")]
    UnknownExam(ExamId),
    #[error("operation requires phase {expected}, exam is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("phase {0} is not advanced manually")]
    AutomaticPhase(Phase),
    #[error("only the instructor of exam {exam} may do this")]
    NotInstructor { exam: ExamId },
    #[error("{user} needs {needed} micro-tokens but holds {available}")]
    InsufficientBalance {
        user: UserId,
        needed: u64,
        available: u64,
    },
    #[error("amount must be positive")]
    BadAmount,
    #[error("bad exam settings: {0}")]
    BadSettings(String),
    #[error("cannot enrol as {0:?}")]
    InvalidEnrolmentRole(Role),
    #[error("{user} already holds the {existing:?} role in this exam")]
    DuplicateRole { user: UserId, existing: Role },
    #[error("{user} is not enrolled as {role:?}")]
    NotEnrolled { user: UserId, role: Role },
    #[error("no {0:?} enrolled yet")]
    EmptyEnrolment(Role),
    #[error("no candidate has submitted answers")]
    NothingSubmitted,
    #[error("{user} has used all {max} attempts")]
    AttemptsExhausted { user: UserId, max: u32 },
    #[error("probe grades must cover exactly the probe papers")]
    ProbeSetMismatch,
    #[error("probe papers are not graded yet")]
    ProbesNotGraded,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("score {value} is outside [{lo}, {hi}]")]
    ScoreOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("evaluations from {user} do not cover exactly their bundle")]
    BundleMismatch { user: UserId },
    #[error("evaluator {user} has not submitted evaluations")]
    MissingEvaluations { user: UserId },
    #[error("{user} has no paper in this exam")]
    NoPaper { user: UserId },
    #[error("paper {0:?} is a probe; the instructor already graded it")]
    RegradeOnProbe(PaperId),
    #[error("paper {0:?} already has a regrade on file")]
    AlreadyFiled(PaperId),
    #[error("paper {0:?} has no regrade to decide")]
    NothingFiled(PaperId),
    #[error("regrades still undecided on papers {0:?}")]
    UndecidedRegrades(Vec<PaperId>),
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// What a paying viewer sees: the subject's per-exam grades and
/// evaluation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub subject: UserId,
    pub skill_scores: BTreeMap<ExamId, f64>,
    pub evaluation_scores: BTreeMap<ExamId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegradeOutcome {
    pub paper: PaperId,
    pub raised: bool,
    pub final_grade: f64,
    pub penalty_charged: u64,
}

impl ExamSettings {
    pub fn from_config(cfg: &ExamConfig, seed: u64) -> Self {
        Self {
            ell: cfg.shape.ell,
            k: cfg.shape.k,
            coverage: cfg.coverage,
            max_attempts: cfg.max_attempts,
            seed,
            prior: cfg.prior,
            interval: cfg.interval,
            fees: cfg.fees,
            estimation: Default::default(),
        }
    }
}

pub struct Ledger {
    state: LedgerState,
    log: EventLog,
    /// Platform-level fee for certificate views (views are not tied to a
    /// single exam).
    viewer_fee: u64,
}

impl Ledger {
    pub fn new(viewer_fee: u64) -> Self {
        Self {
            state: LedgerState::default(),
            log: EventLog::new(),
            viewer_fee,
        }
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Rebuild a ledger by verifying and folding a serialized log.
    pub fn replay(bytes: &[u8], viewer_fee: u64) -> Result<Self, ChainError> {
        let log = EventLog::from_bytes(bytes)?;
        log.verify()?;
        let mut state = LedgerState::default();
        for rec in log.records() {
            state.apply(&rec.payload);
        }
        Ok(Self {
            state,
            log,
            viewer_fee,
        })
    }

    fn commit(&mut self, events: Vec<Event>) {
        for event in events {
            let rec = self.log.append(event);
            self.state.apply(&rec.payload);
        }
    }

    fn known_user(&self, user: &str) -> Result<(), LedgerError> {
        if self.state.wallets.contains_key(user) {
            Ok(())
        } else {
            Err(LedgerError::UnknownUser(user.to_string()))
        }
    }

    fn exam(&self, exam: ExamId) -> Result<&ExamContract, LedgerError> {
        self.state
            .exams
            .get(&exam)
            .ok_or(LedgerError::UnknownExam(exam))
    }

    fn require_balance(&self, user: &str, needed: u64) -> Result<(), LedgerError> {
        let available = self.state.wallets[user].balance;
        if available < needed {
            return Err(LedgerError::InsufficientBalance {
                user: user.to_string(),
                needed,
                available,
            });
        }
        Ok(())
    }

    pub fn create_user(&mut self, user: &str) -> Result<(), LedgerError> {
        if self.state.wallets.contains_key(user) {
            return Err(LedgerError::DuplicateUser(user.to_string()));
        }
        self.commit(vec![Event::UserCreated { user: user.into() }]);
        Ok(())
    }

    pub fn top_up(&mut self, user: &str, amount: u64) -> Result<(), LedgerError> {
        self.known_user(user)?;
        if amount == 0 {
            return Err(LedgerError::BadAmount);
        }
        self.commit(vec![Event::ToppedUp {
            user: user.into(),
            amount,
        }]);
        Ok(())
    }

    pub fn create_exam(
        &mut self,
        instructor: &str,
        settings: ExamSettings,
    ) -> Result<ExamId, LedgerError> {
        self.known_user(instructor)?;
        validate_settings(&settings)?;
        self.require_balance(instructor, settings.fees.instructor_fee)?;
        let exam = self.state.next_exam_id;
        let fee = settings.fees.instructor_fee;
        self.commit(vec![
            Event::ExamCreated {
                exam,
                instructor: instructor.into(),
                settings,
                fee_to_escrow: fee,
            },
            Event::PhaseAdvanced {
                exam,
                from: Phase::Created,
                to: Phase::Enrolment,
            },
        ]);
        Ok(exam)
    }

    pub fn enrol(&mut self, exam: ExamId, user: &str, role: Role) -> Result<(), LedgerError> {
        self.known_user(user)?;
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::Enrolment)?;
        let fee = match role {
            Role::Candidate => contract.settings.fees.candidate_fee,
            Role::Evaluator => contract.settings.fees.evaluator_stake,
            other => return Err(LedgerError::InvalidEnrolmentRole(other)),
        };
        if let Some(existing) = contract.role_of(user) {
            return Err(LedgerError::DuplicateRole {
                user: user.into(),
                existing,
            });
        }
        self.require_balance(user, fee)?;
        self.commit(vec![Event::Enrolled {
            exam,
            user: user.into(),
            role,
            fee_to_escrow: fee,
        }]);
        Ok(())
    }

    /// Manual phase steps: Enrolment → Submission → ProbeGrading →
    /// Evaluation. The plan is built (and frozen into the log) on the
    /// Submission → ProbeGrading step; later phases move via
    /// `compute_and_release` and `finalize`.
    pub fn advance_phase(&mut self, exam: ExamId, caller: &str) -> Result<Phase, LedgerError> {
        let contract = self.exam(exam)?;
        require_instructor(contract, caller)?;
        let from = contract.phase;
        let mut events = Vec::new();
        match from {
            Phase::Enrolment => {
                if contract.candidates.is_empty() {
                    return Err(LedgerError::EmptyEnrolment(Role::Candidate));
                }
                if contract.evaluators.is_empty() {
                    return Err(LedgerError::EmptyEnrolment(Role::Evaluator));
                }
            }
            Phase::Submission => {
                if contract.submissions.is_empty() {
                    return Err(LedgerError::NothingSubmitted);
                }
                let candidates: Vec<UserId> = contract.submissions.keys().cloned().collect();
                let evaluators: Vec<UserId> = contract.evaluators.iter().cloned().collect();
                let s = &contract.settings;
                let plan = build_assignment(
                    candidates.len() as u32,
                    evaluators.len() as u32,
                    s.ell,
                    s.k,
                    s.coverage,
                    &mut RngStream::new(s.seed, PLAN_STREAM),
                )?;
                events.push(Event::PlanBuilt {
                    exam,
                    candidates,
                    evaluators,
                    plan,
                });
            }
            Phase::ProbeGrading => {
                let plan = contract.plan.as_ref().expect("plan built");
                let graded = contract.probe_truth.keys().copied().collect::<Vec<_>>();
                let expected = plan.probe_ids.iter().copied().collect::<Vec<_>>();
                if graded != expected {
                    return Err(LedgerError::ProbesNotGraded);
                }
            }
            other => return Err(LedgerError::AutomaticPhase(other)),
        }
        let to = from.next().expect("matched phases have a successor");
        events.push(Event::PhaseAdvanced { exam, from, to });
        self.commit(events);
        Ok(to)
    }

    pub fn submit_answers(
        &mut self,
        exam: ExamId,
        candidate: &str,
        blob: &str,
    ) -> Result<u32, LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::Submission)?;
        if !contract.candidates.contains(candidate) {
            return Err(LedgerError::NotEnrolled {
                user: candidate.into(),
                role: Role::Candidate,
            });
        }
        let used = contract
            .attempt_counts
            .get(candidate)
            .copied()
            .unwrap_or(0);
        if used >= contract.settings.max_attempts {
            return Err(LedgerError::AttemptsExhausted {
                user: candidate.into(),
                max: contract.settings.max_attempts,
            });
        }
        let attempt = used + 1;
        self.commit(vec![Event::AnswersSubmitted {
            exam,
            candidate: candidate.into(),
            attempt,
            blob: blob.into(),
        }]);
        Ok(attempt)
    }

    pub fn record_probe_grades(
        &mut self,
        exam: ExamId,
        caller: &str,
        grades: BTreeMap<PaperId, f64>,
    ) -> Result<(), LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::ProbeGrading)?;
        require_instructor(contract, caller)?;
        let plan = contract.plan.as_ref().expect("plan built");
        if grades.len() != plan.probe_ids.len()
            || !grades.keys().all(|p| plan.probe_ids.contains(p))
        {
            return Err(LedgerError::ProbeSetMismatch);
        }
        let interval = contract.settings.interval;
        for &value in grades.values() {
            if !value.is_finite() {
                return Err(LedgerError::NonFiniteScore(value));
            }
            if !interval.contains(value) {
                return Err(LedgerError::ScoreOutOfRange {
                    value,
                    lo: interval.lo,
                    hi: interval.hi,
                });
            }
        }
        self.commit(vec![Event::ProbeGradesRecorded { exam, grades }]);
        Ok(())
    }

    pub fn record_evaluations(
        &mut self,
        exam: ExamId,
        evaluator: &str,
        scores: BTreeMap<PaperId, f64>,
    ) -> Result<(), LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::Evaluation)?;
        let Some(&eid) = contract.evaluator_ids.get(evaluator) else {
            return Err(LedgerError::NotEnrolled {
                user: evaluator.into(),
                role: Role::Evaluator,
            });
        };
        let bundle = &contract.plan.as_ref().expect("plan built").per_evaluator[&eid];
        let assigned = bundle.probes.len() + bundle.nonprobes.len();
        if scores.len() != assigned
            || !scores
                .keys()
                .all(|p| bundle.probes.contains(p) || bundle.nonprobes.contains(p))
        {
            return Err(LedgerError::BundleMismatch {
                user: evaluator.into(),
            });
        }
        if let Some(&bad) = scores.values().find(|v| !v.is_finite()) {
            return Err(LedgerError::NonFiniteScore(bad));
        }
        let gas = contract.settings.fees.evaluation_gas_fee;
        self.require_balance(evaluator, gas)?;
        self.commit(vec![Event::EvaluationsRecorded {
            exam,
            evaluator: evaluator.into(),
            scores,
            gas_charged: gas,
        }]);
        Ok(())
    }

    /// Estimate evaluator parameters from the probe grades, aggregate every
    /// paper, and open the regrade window.
    pub fn compute_and_release(
        &mut self,
        exam: ExamId,
        caller: &str,
    ) -> Result<&ScoreRelease, LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::Evaluation)?;
        require_instructor(contract, caller)?;
        let plan = contract.plan.as_ref().expect("plan built");

        let mut reports = BTreeMap::new();
        let mut params = BTreeMap::new();
        for (user, &eid) in &contract.evaluator_ids {
            let Some(scores) = contract.evaluations.get(user) else {
                return Err(LedgerError::MissingEvaluations { user: user.clone() });
            };
            let bundle = &plan.per_evaluator[&eid];
            let on_probes: BTreeMap<PaperId, f64> =
                bundle.probes.iter().map(|&p| (p, scores[&p])).collect();
            let sub_truth: BTreeMap<PaperId, f64> = bundle
                .probes
                .iter()
                .map(|&p| (p, contract.probe_truth[&p]))
                .collect();
            params.insert(
                eid,
                estimate_params(&on_probes, &sub_truth, &contract.settings.estimation)?,
            );
            reports.insert(eid, scores.clone());
        }
        let records = crate::scoring::score_papers(
            plan,
            &reports,
            &params,
            &contract.settings.prior,
            &contract.probe_truth,
        )?;
        self.commit(vec![
            Event::ScoresComputed {
                exam,
                release: ScoreRelease { records, params },
            },
            Event::PhaseAdvanced {
                exam,
                from: Phase::Evaluation,
                to: Phase::ScoresReleased,
            },
            Event::PhaseAdvanced {
                exam,
                from: Phase::ScoresReleased,
                to: Phase::RegradeWindow,
            },
        ]);
        Ok(self.state.exams[&exam].release.as_ref().unwrap())
    }

    /// A candidate contests their own (non-probe) released grade.
    pub fn file_regrade(&mut self, exam: ExamId, candidate: &str) -> Result<PaperId, LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::RegradeWindow)?;
        let Some(&paper) = contract.candidate_papers.get(candidate) else {
            return Err(LedgerError::NoPaper {
                user: candidate.into(),
            });
        };
        let plan = contract.plan.as_ref().expect("plan built");
        if plan.probe_ids.contains(&paper) {
            return Err(LedgerError::RegradeOnProbe(paper));
        }
        if contract.regrades.contains_key(&paper) {
            return Err(LedgerError::AlreadyFiled(paper));
        }
        self.commit(vec![Event::RegradeFiled {
            exam,
            candidate: candidate.into(),
            paper,
        }]);
        Ok(paper)
    }

    /// The instructor re-marks a contested paper, revealing its true score.
    /// The grade is raised iff the true score strictly exceeds the released
    /// aggregate; otherwise the grade stands and the filing candidate pays
    /// the regrade penalty when the exam has penalties enabled.
    pub fn decide_regrade(
        &mut self,
        exam: ExamId,
        caller: &str,
        paper: PaperId,
        true_score: f64,
    ) -> Result<RegradeOutcome, LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::RegradeWindow)?;
        require_instructor(contract, caller)?;
        match contract.regrades.get(&paper) {
            Some(RegradeStatus::Filed) => {}
            _ => return Err(LedgerError::NothingFiled(paper)),
        }
        let interval = contract.settings.interval;
        if !true_score.is_finite() {
            return Err(LedgerError::NonFiniteScore(true_score));
        }
        if !interval.contains(true_score) {
            return Err(LedgerError::ScoreOutOfRange {
                value: true_score,
                lo: interval.lo,
                hi: interval.hi,
            });
        }
        let release = contract.release.as_ref().expect("scores released");
        let record = release
            .records
            .iter()
            .find(|r| r.paper_id == paper)
            .expect("released paper record");
        let raised = true_score > record.aggregated;
        let final_grade = record.aggregated.max(true_score);
        let fees = &contract.settings.fees;
        let penalty_charged = if !raised && fees.penalty_enabled {
            // Cannot drive a wallet below zero.
            let owner = contract.paper_owner(paper).expect("paper has owner");
            fees.regrade_penalty.min(self.state.wallets[owner].balance)
        } else {
            0
        };
        self.commit(vec![Event::RegradeDecided {
            exam,
            paper,
            true_score,
            raised,
            final_grade,
            penalty_charged,
        }]);
        Ok(RegradeOutcome {
            paper,
            raised,
            final_grade,
            penalty_charged,
        })
    }

    /// Settle the exam: evaluator transfers are computed from the released
    /// (and regrade-adjusted) records, rounded half-to-even to micro-tokens,
    /// and paid together with stake and gas refunds. Negative entitlements
    /// are absorbed by the refunds and floored at zero; unspent escrow is
    /// swept to the platform reserve, and any overrun is drawn from it.
    pub fn finalize(
        &mut self,
        exam: ExamId,
        caller: &str,
        alpha: f64,
    ) -> Result<&PayoutReport, LedgerError> {
        let contract = self.exam(exam)?;
        require_phase(contract, Phase::RegradeWindow)?;
        require_instructor(contract, caller)?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(LedgerError::BadAlpha(alpha));
        }
        let undecided: Vec<PaperId> = contract
            .regrades
            .iter()
            .filter(|(_, s)| matches!(s, RegradeStatus::Filed))
            .map(|(&p, _)| p)
            .collect();
        if !undecided.is_empty() {
            return Err(LedgerError::UndecidedRegrades(undecided));
        }

        let plan = contract.plan.as_ref().expect("plan built");
        let release = contract.release.as_ref().expect("scores released");
        let sheet = transfers(
            plan,
            &release.records,
            &release.params,
            &contract.settings.prior,
            alpha,
        )?;

        let stake = contract.settings.fees.evaluator_stake;
        let mut by_eid: Vec<(&UserId, EvaluatorId)> = contract
            .evaluator_ids
            .iter()
            .map(|(u, &e)| (u, e))
            .collect();
        by_eid.sort_by_key(|&(_, e)| e);

        let mut lines = Vec::new();
        let mut paid_total: u64 = 0;
        for (user, eid) in by_eid {
            let transfer = sheet.totals.get(&eid).copied().unwrap_or(0.0);
            let transfer_micro = (transfer * 1e6).round_ties_even() as i64;
            let gas_refund = contract.gas_paid.get(user).copied().unwrap_or(0);
            let entitlement_full =
                stake as i128 + gas_refund as i128 + transfer_micro as i128;
            let paid = entitlement_full.max(0) as u64;
            let shortfall = (-entitlement_full).max(0) as u64;
            paid_total += paid;
            lines.push(PayoutLine {
                user: user.clone(),
                evaluator: eid,
                transfer,
                transfer_micro,
                stake_refund: stake,
                gas_refund,
                entitlement: entitlement_full
                    .clamp(i64::MIN as i128, i64::MAX as i128) as i64,
                paid,
                shortfall,
            });
        }

        let interval = contract.settings.interval;
        let skill_scores: Vec<(UserId, f64)> = release
            .records
            .iter()
            .map(|r| {
                let owner = contract.paper_owner(r.paper_id).expect("paper has owner");
                (owner.clone(), interval.clip(r.final_grade))
            })
            .collect();

        let escrow_before = contract.escrow;
        let leftover_to_reserve = escrow_before.saturating_sub(paid_total);
        let reserve_draw = paid_total.saturating_sub(escrow_before);
        let payout = PayoutReport {
            alpha,
            lines,
            skill_scores,
            escrow_before,
            paid_total,
            leftover_to_reserve,
            reserve_draw,
        };

        let mut events = vec![Event::Finalized {
            exam,
            payout: payout.clone(),
        }];
        if reserve_draw > 0 {
            events.push(Event::ReserveAlert {
                exam,
                shortfall: reserve_draw,
            });
        }
        events.push(Event::PhaseAdvanced {
            exam,
            from: Phase::RegradeWindow,
            to: Phase::Finalized,
        });
        self.commit(events);
        Ok(self.state.exams[&exam].payout.as_ref().unwrap())
    }

    /// A viewer pays the platform fee to read a user's certificate scores.
    pub fn view_certificate(
        &mut self,
        viewer: &str,
        subject: &str,
    ) -> Result<Portfolio, LedgerError> {
        self.known_user(viewer)?;
        self.known_user(subject)?;
        self.require_balance(viewer, self.viewer_fee)?;
        self.commit(vec![Event::CertificateViewed {
            viewer: viewer.into(),
            subject: subject.into(),
            fee: self.viewer_fee,
        }]);
        let wallet = &self.state.wallets[subject];
        Ok(Portfolio {
            subject: subject.into(),
            skill_scores: wallet.skill_scores.clone(),
            evaluation_scores: wallet.evaluation_scores.clone(),
        })
    }
}

fn require_phase(contract: &ExamContract, expected: Phase) -> Result<(), LedgerError> {
    if contract.phase != expected {
        return Err(LedgerError::WrongPhase {
            expected,
            actual: contract.phase,
        });
    }
    Ok(())
}

fn require_instructor(contract: &ExamContract, caller: &str) -> Result<(), LedgerError> {
    if contract.instructor != caller {
        return Err(LedgerError::NotInstructor {
            exam: contract.exam_id,
        });
    }
    Ok(())
}

fn validate_settings(s: &ExamSettings) -> Result<(), LedgerError> {
    if !s.k.is_multiple_of(2) || s.k < 4 {
        return Err(LedgerError::BadSettings(format!(
            "k must be an even number of at least 4 papers per evaluator, got {}",
            s.k
        )));
    }
    if s.ell < s.k / 2 {
        return Err(LedgerError::BadSettings(format!(
            "need at least k/2 = {} probe papers, got ell = {}",
            s.k / 2,
            s.ell
        )));
    }
    if s.coverage == 0 {
        return Err(LedgerError::BadSettings("coverage must be positive".into()));
    }
    if s.max_attempts == 0 {
        return Err(LedgerError::BadSettings(
            "max_attempts must be positive".into(),
        ));
    }
    Ok(())
}
