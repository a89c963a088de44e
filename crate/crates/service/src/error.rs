use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use workbench_core::kara::{KaraError, PosAssessment};
use workbench_core::triage::TriageError;
use workbench_core::workbench::Error;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

/// An [`ApiError`] together with its HTTP status.
#[derive(Debug)]
pub struct Failure {
    pub status: StatusCode,
    pub body: ApiError,
}

impl Failure {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                code: code.to_string(),
                message: message.into(),
                details: None,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed-request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", message)
    }

    /// A POS submission that fell outside the allowed region. The
    /// assessment itself has been stored (flagged invalid).
    pub fn out_of_region(a: &PosAssessment) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "pos-out-of-region",
            format!("POS {} is outside the region allowed at LOK {}", a.pos, a.lok_used),
        )
        .with_details(json!({
            "lok": a.lok_used,
            "intervals": a.violated,
            "assessment": a.id,
        }))
    }
}

/// HTTP status for a module error code.
pub fn status_of(code: &str) -> StatusCode {
    match code {
        "unknown-id" | "unknown-candidate" => StatusCode::NOT_FOUND,
        "contradiction" | "session-closed" | "duplicate-key" | "not-calibrated" => StatusCode::CONFLICT,
        "io"
        | "corrupt-store"
        | "serialization"
        | "numerical-breakdown"
        | "node-limit-exceeded"
        | "dangling-reference"
        | "cyclic-lineage" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn details(e: &Error) -> Option<Value> {
    match e {
        Error::Kara(KaraError::Contradiction { chain, explanation }) => Some(json!({
            "chain": chain,
            "rejected": explanation.rejected,
            "steps": explanation.steps,
        })),
        Error::Kara(KaraError::ScaleSaturation {
            max_chain,
            epsilon,
            suggested_epsilon,
        }) => Some(json!({
            "max_chain": max_chain,
            "epsilon": epsilon,
            "suggested_epsilon": suggested_epsilon,
        })),
        Error::Kara(KaraError::CorpusTooSmall { found, required })
        | Error::Triage(TriageError::InsufficientLabels { found, required }) => {
            Some(json!({ "found": found, "required": required }))
        }
        Error::MissingAnswers { candidate, risk_factor } => {
            Some(json!({ "candidate": candidate, "risk_factor": risk_factor }))
        }
        _ => None,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = e.code();
        let mut f = Failure::new(status_of(code), code, e.to_string());
        f.body.details = details(&e);
        f
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.body.code, self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}
