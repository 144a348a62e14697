//! Wire types shared by the service and its clients. Domain types that
//! already serialize cleanly (plans, wallets, reports) cross the wire as
//! themselves; these structs only add the request envelopes around them.

use peercert_core::assignment::PaperId;
use peercert_core::budget::CalibrationReport;
use peercert_core::config::{CalibrationSection, ExamConfig, PropertiesSection};
use peercert_core::harness::PropertyReport;
use peercert_core::ledger::{ExamId, ExamSettings, Phase, Role};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable tag, e.g. `wrong_phase`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateUserRequest {
    pub user: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopUpRequest {
    pub user: String,
    /// Micro-tokens.
    pub amount: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateExamRequest {
    pub instructor: String,
    pub settings: ExamSettings,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CreateExamResponse {
    pub exam: ExamId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallerRequest {
    pub caller: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdvanceResponse {
    pub phase: Phase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrolRequest {
    pub user: String,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub candidate: String,
    pub blob: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub attempt: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeGradesRequest {
    pub caller: String,
    pub grades: BTreeMap<PaperId, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationsRequest {
    pub evaluator: String,
    pub scores: BTreeMap<PaperId, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegradeFileRequest {
    pub candidate: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegradeFileResponse {
    pub paper: PaperId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegradeDecideRequest {
    pub caller: String,
    pub paper: PaperId,
    pub true_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalizeRequest {
    pub caller: String,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateRequest {
    pub viewer: String,
    pub subject: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainVerifyResponse {
    pub intact: bool,
    pub records: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertiesRequest {
    pub exam: ExamConfig,
    pub properties: PropertiesSection,
    pub seed: u64,
}

/// Experiment results plus the exact file bodies a caller should persist,
/// so files written from a response match files written locally byte for
/// byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertiesResponse {
    pub passed: bool,
    pub reports: Vec<PropertyReport>,
    pub samples_csv: String,
    pub verdicts_json: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub exam: ExamConfig,
    pub calibration: CalibrationSection,
    pub seed: u64,
}

pub type CalibrateResponse = CalibrationReport;
