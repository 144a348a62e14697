//! Event payloads. Every event carries its full effect so that replaying
//! the log never recomputes anything.

use crate::assignment::{AssignmentPlan, EvaluatorId, PaperId};
use crate::config::FeeSchedule;
use crate::estimation::{EstimatedParams, EstimationConfig};
use crate::model::{Prior, ScoreInterval};
use crate::scoring::PaperScoreRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type UserId = String;
pub type ExamId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Instructor,
    Evaluator,
    Candidate,
    Viewer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Created,
    Enrolment,
    Submission,
    ProbeGrading,
    Evaluation,
    ScoresReleased,
    RegradeWindow,
    Finalized,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        use Phase::*;
        Some(match self {
            Created => Enrolment,
            Enrolment => Submission,
            Submission => ProbeGrading,
            ProbeGrading => Evaluation,
            Evaluation => ScoresReleased,
            ScoresReleased => RegradeWindow,
            RegradeWindow => Finalized,
            Finalized => return None,
        })
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::Created => "created",
            Phase::Enrolment => "enrolment",
            Phase::Submission => "submission",
            Phase::ProbeGrading => "probe-grading",
            Phase::Evaluation => "evaluation",
            Phase::ScoresReleased => "scores-released",
            Phase::RegradeWindow => "regrade-window",
            Phase::Finalized => "finalized",
        };
        f.write_str(name)
    }
}

/// Everything an exam needs beyond enrolment: plan shape, scoring prior,
/// grade interval, fees, and the seed the assignment is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSettings {
    pub ell: u32,
    pub k: u32,
    pub coverage: u32,
    pub max_attempts: u32,
    pub seed: u64,
    pub prior: Prior,
    pub interval: ScoreInterval,
    pub fees: FeeSchedule,
    pub estimation: EstimationConfig,
}

/// Scores as computed at release: per-paper records plus the per-evaluator
/// parameter estimates they were aggregated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRelease {
    pub records: Vec<PaperScoreRecord>,
    pub params: BTreeMap<EvaluatorId, EstimatedParams>,
}

/// One evaluator's settlement at finalize, in micro-tokens. The raw
/// transfer is kept alongside the rounded figure; a negative entitlement
/// is absorbed by the stake and gas refund, then floored at zero with the
/// overhang recorded as `shortfall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoutLine {
    pub user: UserId,
    pub evaluator: EvaluatorId,
    pub transfer: f64,
    pub transfer_micro: i64,
    pub stake_refund: u64,
    pub gas_refund: u64,
    pub entitlement: i64,
    pub paid: u64,
    pub shortfall: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoutReport {
    pub alpha: f64,
    pub lines: Vec<PayoutLine>,
    /// Final grades written to candidate wallets, clipped to the exam's
    /// score interval.
    pub skill_scores: Vec<(UserId, f64)>,
    pub escrow_before: u64,
    pub paid_total: u64,
    /// Unspent escrow swept to the platform reserve.
    pub leftover_to_reserve: u64,
    /// Amount the reserve covered because payouts exceeded escrow.
    pub reserve_draw: u64,
}

// Externally tagged on purpose: internal tagging buffers the payload in a
// form that cannot re-parse integer map keys (plan and report maps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    UserCreated {
        user: UserId,
    },
    ToppedUp {
        user: UserId,
        amount: u64,
    },
    ExamCreated {
        exam: ExamId,
        instructor: UserId,
        settings: ExamSettings,
        fee_to_escrow: u64,
    },
    PhaseAdvanced {
        exam: ExamId,
        from: Phase,
        to: Phase,
    },
    Enrolled {
        exam: ExamId,
        user: UserId,
        role: Role,
        fee_to_escrow: u64,
    },
    AnswersSubmitted {
        exam: ExamId,
        candidate: UserId,
        attempt: u32,
        blob: String,
    },
    /// Paper and evaluator identities are positional: paper `i` belongs to
    /// `candidates[i]`, evaluator id `j` to `evaluators[j]`.
    PlanBuilt {
        exam: ExamId,
        candidates: Vec<UserId>,
        evaluators: Vec<UserId>,
        plan: AssignmentPlan,
    },
    ProbeGradesRecorded {
        exam: ExamId,
        grades: BTreeMap<PaperId, f64>,
    },
    EvaluationsRecorded {
        exam: ExamId,
        evaluator: UserId,
        scores: BTreeMap<PaperId, f64>,
        gas_charged: u64,
    },
    ScoresComputed {
        exam: ExamId,
        release: ScoreRelease,
    },
    RegradeFiled {
        exam: ExamId,
        candidate: UserId,
        paper: PaperId,
    },
    RegradeDecided {
        exam: ExamId,
        paper: PaperId,
        true_score: f64,
        raised: bool,
        final_grade: f64,
        penalty_charged: u64,
    },
    Finalized {
        exam: ExamId,
        payout: PayoutReport,
    },
    /// Payouts exceeded escrow; the difference was drawn from the platform
    /// reserve (which may go negative).
    ReserveAlert {
        exam: ExamId,
        shortfall: u64,
    },
    CertificateViewed {
        viewer: UserId,
        subject: UserId,
        fee: u64,
    },
}
