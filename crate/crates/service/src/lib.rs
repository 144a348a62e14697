//! HTTP facade over the exam ledger plus the experiment harness.
//!
//! All ledger state lives in one process-wide [`Ledger`] behind an async
//! RwLock; commands serialize through it, reads share it. Experiment
//! endpoints are pure compute and run on the blocking pool.

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use peercert_client::api::{
    AdvanceResponse, CalibrateRequest, CallerRequest, ChainVerifyResponse, CreateExamRequest,
    CreateExamResponse, CreateUserRequest, CertificateRequest, EnrolRequest, ErrorBody,
    EvaluationsRequest, FinalizeRequest, ProbeGradesRequest, PropertiesRequest,
    PropertiesResponse, RegradeDecideRequest, RegradeFileRequest, RegradeFileResponse,
    SubmitRequest, SubmitResponse, TopUpRequest,
};
use peercert_core::budget::{calibrate_alpha, BudgetConfig, BudgetError};
use peercert_core::harness::{experiment_csv, experiment_verdicts_json, run_checks, HarnessError};
use peercert_core::ledger::{verify_chain, Ledger, LedgerError};
use std::sync::Arc;
use tokio::sync::RwLock;

pub struct AppState {
    ledger: RwLock<Ledger>,
}

impl AppState {
    pub fn new(viewer_fee: u64) -> Self {
        Self {
            ledger: RwLock::new(Ledger::new(viewer_fee)),
        }
    }
}

/// The full service router. `viewer_fee` is the platform-wide certificate
/// viewing charge in micro-tokens.
pub fn app(viewer_fee: u64) -> Router {
    app_with_state(Arc::new(AppState::new(viewer_fee)))
}

pub fn app_with_state(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/users", post(create_user))
        .route("/wallets/topup", post(top_up))
        .route("/wallets/{user}", get(wallet))
        .route("/exams", post(create_exam))
        .route("/exams/{exam}", get(exam_view))
        .route("/exams/{exam}/advance", post(advance))
        .route("/exams/{exam}/enrol", post(enrol))
        .route("/exams/{exam}/submissions", post(submit))
        .route("/exams/{exam}/assignment", get(assignment))
        .route("/exams/{exam}/probe-grades", post(probe_grades))
        .route("/exams/{exam}/evaluations", post(evaluations))
        .route("/exams/{exam}/release", post(release))
        .route("/exams/{exam}/regrades", post(file_regrade))
        .route("/exams/{exam}/regrades/decide", post(decide_regrade))
        .route("/exams/{exam}/finalize", post(finalize))
        .route("/certificates/view", post(view_certificate))
        .route("/chain/verify", get(chain_verify))
        .route("/chain/log", get(chain_log))
        .route("/experiments/properties", post(properties))
        .route("/experiments/calibrate", post(calibrate))
        .with_state(state)
}

/// Serve until the listener closes.
pub async fn serve(listener: tokio::net::TcpListener, viewer_fee: u64) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, app(viewer_fee)).await
}

// ---------------------------------------------------------------------------
// error mapping

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            kind: self.kind.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<LedgerError> for ApiError {
    fn from(err: LedgerError) -> Self {
        use LedgerError::*;
        let (status, kind) = match &err {
            UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
            UnknownExam(_) => (StatusCode::NOT_FOUND, "unknown_exam"),
            NoPaper { .. } => (StatusCode::NOT_FOUND, "no_paper"),
            NothingFiled(_) => (StatusCode::NOT_FOUND, "nothing_filed"),
            InsufficientBalance { .. } => (StatusCode::PAYMENT_REQUIRED, "insufficient_balance"),
            NotInstructor { .. } => (StatusCode::FORBIDDEN, "not_instructor"),
            NotEnrolled { .. } => (StatusCode::FORBIDDEN, "not_enrolled"),
            DuplicateUser(_) => (StatusCode::CONFLICT, "duplicate_user"),
            WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
            AutomaticPhase(_) => (StatusCode::CONFLICT, "automatic_phase"),
            DuplicateRole { .. } => (StatusCode::CONFLICT, "duplicate_role"),
            EmptyEnrolment(_) => (StatusCode::CONFLICT, "empty_enrolment"),
            NothingSubmitted => (StatusCode::CONFLICT, "nothing_submitted"),
            AttemptsExhausted { .. } => (StatusCode::CONFLICT, "attempts_exhausted"),
            ProbesNotGraded => (StatusCode::CONFLICT, "probes_not_graded"),
            MissingEvaluations { .. } => (StatusCode::CONFLICT, "missing_evaluations"),
            AlreadyFiled(_) => (StatusCode::CONFLICT, "already_filed"),
            UndecidedRegrades(_) => (StatusCode::CONFLICT, "undecided_regrades"),
            BadAmount => (StatusCode::BAD_REQUEST, "bad_amount"),
            BadSettings(_) => (StatusCode::BAD_REQUEST, "bad_settings"),
            InvalidEnrolmentRole(_) => (StatusCode::BAD_REQUEST, "invalid_enrolment_role"),
            ProbeSetMismatch => (StatusCode::BAD_REQUEST, "probe_set_mismatch"),
            NonFiniteScore(_) => (StatusCode::BAD_REQUEST, "non_finite_score"),
            ScoreOutOfRange { .. } => (StatusCode::BAD_REQUEST, "score_out_of_range"),
            BundleMismatch { .. } => (StatusCode::BAD_REQUEST, "bundle_mismatch"),
            RegradeOnProbe(_) => (StatusCode::BAD_REQUEST, "regrade_on_probe"),
            BadAlpha(_) => (StatusCode::BAD_REQUEST, "bad_alpha"),
            Assignment(_) => (StatusCode::BAD_REQUEST, "assignment"),
            Estimation(_) => (StatusCode::BAD_REQUEST, "estimation"),
            Scoring(_) => (StatusCode::BAD_REQUEST, "scoring"),
        };
        ApiError::new(status, kind, err.to_string())
    }
}

impl From<HarnessError> for ApiError {
    fn from(err: HarnessError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "harness", err.to_string())
    }
}

impl From<BudgetError> for ApiError {
    fn from(err: BudgetError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "budget", err.to_string())
    }
}

fn blocking_panic() -> ApiError {
    ApiError::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "internal",
        "experiment task failed",
    )
}

// ---------------------------------------------------------------------------
// handlers

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "ok": true }))
}

async fn create_user(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateUserRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    state.ledger.write().await.create_user(&req.user)?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "user": req.user })),
    ))
}

async fn top_up(
    State(state): State<Arc<AppState>>,
    Json(req): Json<TopUpRequest>,
) -> Result<Json<peercert_core::ledger::Wallet>, ApiError> {
    let mut ledger = state.ledger.write().await;
    ledger.top_up(&req.user, req.amount)?;
    Ok(Json(ledger.state().wallets[&req.user].clone()))
}

async fn wallet(
    State(state): State<Arc<AppState>>,
    Path(user): Path<String>,
) -> Result<Json<peercert_core::ledger::Wallet>, ApiError> {
    let ledger = state.ledger.read().await;
    let wallet = ledger
        .state()
        .wallets
        .get(&user)
        .ok_or_else(|| ApiError::from(LedgerError::UnknownUser(user.clone())))?;
    Ok(Json(wallet.clone()))
}

async fn create_exam(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateExamRequest>,
) -> Result<(StatusCode, Json<CreateExamResponse>), ApiError> {
    let exam = state
        .ledger
        .write()
        .await
        .create_exam(&req.instructor, req.settings)?;
    Ok((StatusCode::CREATED, Json(CreateExamResponse { exam })))
}

async fn exam_view(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
) -> Result<Json<peercert_core::ledger::ExamContract>, ApiError> {
    let ledger = state.ledger.read().await;
    let contract = ledger
        .state()
        .exams
        .get(&exam)
        .ok_or_else(|| ApiError::from(LedgerError::UnknownExam(exam)))?;
    Ok(Json(contract.clone()))
}

async fn advance(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<CallerRequest>,
) -> Result<Json<AdvanceResponse>, ApiError> {
    let phase = state.ledger.write().await.advance_phase(exam, &req.caller)?;
    Ok(Json(AdvanceResponse { phase }))
}

async fn enrol(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<EnrolRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    state.ledger.write().await.enrol(exam, &req.user, req.role)?;
    Ok(Json(serde_json::json!({})))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<SubmitRequest>,
) -> Result<Json<SubmitResponse>, ApiError> {
    let attempt = state
        .ledger
        .write()
        .await
        .submit_answers(exam, &req.candidate, &req.blob)?;
    Ok(Json(SubmitResponse { attempt }))
}

async fn assignment(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
) -> Result<Json<peercert_core::assignment::AssignmentPlan>, ApiError> {
    let ledger = state.ledger.read().await;
    let contract = ledger
        .state()
        .exams
        .get(&exam)
        .ok_or_else(|| ApiError::from(LedgerError::UnknownExam(exam)))?;
    let plan = contract.plan.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "no_plan", "assignment not built yet")
    })?;
    Ok(Json(plan.clone()))
}

async fn probe_grades(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<ProbeGradesRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    state
        .ledger
        .write()
        .await
        .record_probe_grades(exam, &req.caller, req.grades)?;
    Ok(Json(serde_json::json!({})))
}

async fn evaluations(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<EvaluationsRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    state
        .ledger
        .write()
        .await
        .record_evaluations(exam, &req.evaluator, req.scores)?;
    Ok(Json(serde_json::json!({})))
}

async fn release(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<CallerRequest>,
) -> Result<Json<peercert_core::ledger::ScoreRelease>, ApiError> {
    let mut ledger = state.ledger.write().await;
    let release = ledger.compute_and_release(exam, &req.caller)?;
    Ok(Json(release.clone()))
}

async fn file_regrade(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<RegradeFileRequest>,
) -> Result<Json<RegradeFileResponse>, ApiError> {
    let paper = state
        .ledger
        .write()
        .await
        .file_regrade(exam, &req.candidate)?;
    Ok(Json(RegradeFileResponse { paper }))
}

async fn decide_regrade(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<RegradeDecideRequest>,
) -> Result<Json<peercert_core::ledger::RegradeOutcome>, ApiError> {
    let outcome = state
        .ledger
        .write()
        .await
        .decide_regrade(exam, &req.caller, req.paper, req.true_score)?;
    Ok(Json(outcome))
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    Path(exam): Path<u32>,
    Json(req): Json<FinalizeRequest>,
) -> Result<Json<peercert_core::ledger::PayoutReport>, ApiError> {
    let mut ledger = state.ledger.write().await;
    let payout = ledger.finalize(exam, &req.caller, req.alpha)?;
    Ok(Json(payout.clone()))
}

async fn view_certificate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CertificateRequest>,
) -> Result<Json<peercert_core::ledger::Portfolio>, ApiError> {
    let portfolio = state
        .ledger
        .write()
        .await
        .view_certificate(&req.viewer, &req.subject)?;
    Ok(Json(portfolio))
}

async fn chain_verify(
    State(state): State<Arc<AppState>>,
) -> Result<Json<ChainVerifyResponse>, ApiError> {
    let ledger = state.ledger.read().await;
    let bytes = ledger.log().to_bytes();
    Ok(Json(ChainVerifyResponse {
        intact: verify_chain(&bytes),
        records: ledger.log().len() as u64,
    }))
}

async fn chain_log(State(state): State<Arc<AppState>>) -> Response {
    let bytes = state.ledger.read().await.log().to_bytes();
    (
        [(header::CONTENT_TYPE, "application/octet-stream")],
        bytes,
    )
        .into_response()
}

async fn properties(
    Json(req): Json<PropertiesRequest>,
) -> Result<Json<PropertiesResponse>, ApiError> {
    let reports = tokio::task::spawn_blocking(move || {
        run_checks(&req.exam, &req.properties, req.seed)
    })
    .await
    .map_err(|_| blocking_panic())??;

    Ok(Json(PropertiesResponse {
        passed: reports.iter().all(|r| r.passed()),
        samples_csv: experiment_csv(&reports),
        verdicts_json: experiment_verdicts_json(&reports),
        reports,
    }))
}

async fn calibrate(
    Json(req): Json<CalibrateRequest>,
) -> Result<Json<peercert_core::budget::CalibrationReport>, ApiError> {
    let report = tokio::task::spawn_blocking(move || {
        let budget = BudgetConfig {
            k_net: req.calibration.k_net,
            safety_margin: req.calibration.safety_margin,
            mc_samples: req.calibration.mc_samples,
            strategy_prior: req.calibration.strategy_prior(),
        };
        calibrate_alpha(&req.exam, &budget, req.seed)
    })
    .await
    .map_err(|_| blocking_panic())??;
    Ok(Json(report))
}
