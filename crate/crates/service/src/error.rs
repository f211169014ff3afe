use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gesteval::analysis::{AnalysisError, ErrorClass};
use gesteval::model::ModelError;
use gesteval::study::StudyError;
use serde::{Deserialize, Serialize};

/// JSON error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Offending field path for validation failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub kind: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                field: None,
                kind: kind.into(),
            },
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn invalid(field: impl Into<String>, error: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", error).with_field(field)
    }

    pub fn conflict(error: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", error)
    }

    pub fn internal(error: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", error)
    }

    pub fn unavailable(error: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", error)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let msg = e.to_string();
        match e {
            StudyError::UnknownSession(_) | StudyError::PageOutOfRange { .. } => ApiError::not_found(msg),
            StudyError::RepeatTaker(_)
            | StudyError::PoolExhausted { .. }
            | StudyError::PageAlreadyAnswered { .. }
            | StudyError::SessionClosed { .. } => ApiError::conflict(msg),
            StudyError::InvalidSubmission(v) | StudyError::Validation(v) => ApiError::invalid(v.path, msg),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", msg),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Validation(v) => ApiError::invalid(v.path, msg),
            ModelError::Parse { line, .. } | ModelError::UnexpectedRecord { line, .. } => {
                ApiError::invalid(format!("line {line}"), msg)
            }
            ModelError::DuplicateVote { .. } => ApiError::conflict(msg),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", msg),
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let kind = match e.class() {
            ErrorClass::Validation => "validation",
            ErrorClass::Computation => "computation",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, kind, e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(format!("storage: {e}"))
    }
}
