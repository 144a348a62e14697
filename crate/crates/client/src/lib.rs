//! Thin typed client for the peercert service.

pub mod api;

use api::*;
use peercert_core::assignment::{AssignmentPlan, PaperId};
use peercert_core::budget::CalibrationReport;
use peercert_core::ledger::{
    ExamContract, ExamId, ExamSettings, Phase, Portfolio, RegradeOutcome, Role, ScoreRelease,
    Wallet,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
    /// The service answered with a non-2xx status.
    #[error("{kind}: {message} (status {status})")]
    Api {
        status: u16,
        kind: String,
        message: String,
    },
}

impl ClientError {
    /// Machine-readable error tag, when the service provided one.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            ClientError::Transport(_) => None,
        }
    }
}

pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let body: ErrorBody = serde_json::from_str(&text).unwrap_or(ErrorBody {
            kind: "unknown".to_string(),
            message: text,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            kind: body.kind,
            message: body.message,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn healthz(&self) -> Result<(), ClientError> {
        let _: serde_json::Value = self.get("/healthz").await?;
        Ok(())
    }

    pub async fn create_user(&self, user: &str) -> Result<(), ClientError> {
        let _: serde_json::Value = self
            .post(
                "/users",
                &CreateUserRequest {
                    user: user.to_string(),
                },
            )
            .await?;
        Ok(())
    }

    pub async fn top_up(&self, user: &str, amount: u64) -> Result<Wallet, ClientError> {
        self.post(
            "/wallets/topup",
            &TopUpRequest {
                user: user.to_string(),
                amount,
            },
        )
        .await
    }

    pub async fn wallet(&self, user: &str) -> Result<Wallet, ClientError> {
        self.get(&format!("/wallets/{user}")).await
    }

    pub async fn create_exam(
        &self,
        instructor: &str,
        settings: ExamSettings,
    ) -> Result<ExamId, ClientError> {
        let resp: CreateExamResponse = self
            .post(
                "/exams",
                &CreateExamRequest {
                    instructor: instructor.to_string(),
                    settings,
                },
            )
            .await?;
        Ok(resp.exam)
    }

    pub async fn exam(&self, exam: ExamId) -> Result<ExamContract, ClientError> {
        self.get(&format!("/exams/{exam}")).await
    }

    pub async fn enrol(&self, exam: ExamId, user: &str, role: Role) -> Result<(), ClientError> {
        let _: serde_json::Value = self
            .post(
                &format!("/exams/{exam}/enrol"),
                &EnrolRequest {
                    user: user.to_string(),
                    role,
                },
            )
            .await?;
        Ok(())
    }

    pub async fn advance_phase(&self, exam: ExamId, caller: &str) -> Result<Phase, ClientError> {
        let resp: AdvanceResponse = self
            .post(
                &format!("/exams/{exam}/advance"),
                &CallerRequest {
                    caller: caller.to_string(),
                },
            )
            .await?;
        Ok(resp.phase)
    }

    pub async fn submit_answers(
        &self,
        exam: ExamId,
        candidate: &str,
        blob: &str,
    ) -> Result<u32, ClientError> {
        let resp: SubmitResponse = self
            .post(
                &format!("/exams/{exam}/submissions"),
                &SubmitRequest {
                    candidate: candidate.to_string(),
                    blob: blob.to_string(),
                },
            )
            .await?;
        Ok(resp.attempt)
    }

    pub async fn assignment(&self, exam: ExamId) -> Result<AssignmentPlan, ClientError> {
        self.get(&format!("/exams/{exam}/assignment")).await
    }

    pub async fn record_probe_grades(
        &self,
        exam: ExamId,
        caller: &str,
        grades: BTreeMap<PaperId, f64>,
    ) -> Result<(), ClientError> {
        let _: serde_json::Value = self
            .post(
                &format!("/exams/{exam}/probe-grades"),
                &ProbeGradesRequest {
                    caller: caller.to_string(),
                    grades,
                },
            )
            .await?;
        Ok(())
    }

    pub async fn record_evaluations(
        &self,
        exam: ExamId,
        evaluator: &str,
        scores: BTreeMap<PaperId, f64>,
    ) -> Result<(), ClientError> {
        let _: serde_json::Value = self
            .post(
                &format!("/exams/{exam}/evaluations"),
                &EvaluationsRequest {
                    evaluator: evaluator.to_string(),
                    scores,
                },
            )
            .await?;
        Ok(())
    }

    pub async fn compute_and_release(
        &self,
        exam: ExamId,
        caller: &str,
    ) -> Result<ScoreRelease, ClientError> {
        self.post(
            &format!("/exams/{exam}/release"),
            &CallerRequest {
                caller: caller.to_string(),
            },
        )
        .await
    }

    pub async fn file_regrade(
        &self,
        exam: ExamId,
        candidate: &str,
    ) -> Result<PaperId, ClientError> {
        let resp: RegradeFileResponse = self
            .post(
                &format!("/exams/{exam}/regrades"),
                &RegradeFileRequest {
                    candidate: candidate.to_string(),
                },
            )
            .await?;
        Ok(resp.paper)
    }

    pub async fn decide_regrade(
        &self,
        exam: ExamId,
        caller: &str,
        paper: PaperId,
        true_score: f64,
    ) -> Result<RegradeOutcome, ClientError> {
        self.post(
            &format!("/exams/{exam}/regrades/decide"),
            &RegradeDecideRequest {
                caller: caller.to_string(),
                paper,
                true_score,
            },
        )
        .await
    }

    pub async fn finalize(
        &self,
        exam: ExamId,
        caller: &str,
        alpha: f64,
    ) -> Result<peercert_core::ledger::PayoutReport, ClientError> {
        self.post(
            &format!("/exams/{exam}/finalize"),
            &FinalizeRequest {
                caller: caller.to_string(),
                alpha,
            },
        )
        .await
    }

    pub async fn view_certificate(
        &self,
        viewer: &str,
        subject: &str,
    ) -> Result<Portfolio, ClientError> {
        self.post(
            "/certificates/view",
            &CertificateRequest {
                viewer: viewer.to_string(),
                subject: subject.to_string(),
            },
        )
        .await
    }

    pub async fn chain_verify(&self) -> Result<ChainVerifyResponse, ClientError> {
        self.get("/chain/verify").await
    }

    /// Raw event log in its framed byte format.
    pub async fn chain_log(&self) -> Result<Vec<u8>, ClientError> {
        let resp = self
            .http
            .get(format!("{}/chain/log", self.base))
            .send()
            .await?;
        let status = resp.status();
        if !status.is_success() {
            return Self::decode::<Vec<u8>>(resp).await;
        }
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn run_properties(
        &self,
        req: &PropertiesRequest,
    ) -> Result<PropertiesResponse, ClientError> {
        self.post("/experiments/properties", req).await
    }

    pub async fn run_calibration(
        &self,
        req: &CalibrateRequest,
    ) -> Result<CalibrationReport, ClientError> {
        self.post("/experiments/calibrate", req).await
    }
}
