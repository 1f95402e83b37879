use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

/// Errors returned to HTTP clients. Each maps to a status and a stable
/// machine-readable `code`.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    NotFound(String),

    #[error("{message}")]
    InvalidConfig { field: Option<String>, message: String },

    #[error("{0}")]
    InvalidRequest(String),

    #[error("{0}")]
    InvalidLabel(String),

    #[error("{0}")]
    BatchMismatch(String),

    #[error("session is complete")]
    SessionComplete,

    #[error("idempotency token already used with a different config")]
    IdempotencyConflict,

    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotFound(_) => "not_found",
            Self::InvalidConfig { .. } => "invalid_config",
            Self::InvalidRequest(_) => "invalid_request",
            Self::InvalidLabel(_) => "invalid_label",
            Self::BatchMismatch(_) => "batch_mismatch",
            Self::SessionComplete => "session_complete",
            Self::IdempotencyConflict => "idempotency_conflict",
            Self::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::InvalidConfig { .. } | Self::InvalidRequest(_) | Self::InvalidLabel(_) => StatusCode::BAD_REQUEST,
            Self::BatchMismatch(_) | Self::SessionComplete | Self::IdempotencyConflict => StatusCode::CONFLICT,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Config errors from the core library read `field: message`.
    pub fn from_config(err: direct_core::Error) -> Self {
        use direct_core::Error as E;
        match err {
            E::InvalidConfig(msg) => {
                let field = msg.split_once(':').map(|(f, _)| f.trim().to_string()).filter(|f| !f.contains(' '));
                Self::InvalidConfig { field, message: msg }
            }
            E::Io(_) | E::Parse { .. } | E::InvalidInput(_) | E::DimensionMismatch { .. } | E::MissingClass(_) => {
                Self::InvalidConfig { field: Some("pool".into()), message: err.to_string() }
            }
            other => Self::Internal(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let field = match &self {
            Self::InvalidConfig { field, .. } => field.as_deref(),
            _ => None,
        };
        let body = ErrorBody { error: ErrorDetail { code: self.code(), message: self.to_string(), field } };
        (self.status(), Json(body)).into_response()
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
