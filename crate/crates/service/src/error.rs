use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;
use vault_core::SessionError;

/// Error returned to clients, with a stable machine-readable code.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session with id {0:?}")]
    UnknownSession(String),
    #[error("session already finished")]
    SessionTerminal,
    #[error("malformed signal: {0}")]
    MalformedSignal(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("{0}")]
    InvalidLevel(String),
    #[error(transparent)]
    Session(SessionError),
    #[error("session log write failed: {0}")]
    LogIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Terminal(_) => ApiError::SessionTerminal,
            other => ApiError::Session(other),
        }
    }
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::SessionTerminal => "session_terminal",
            ApiError::MalformedSignal(_) => "malformed_signal",
            ApiError::MalformedRequest(_) => "malformed_request",
            ApiError::InvalidLevel(_) => "invalid_level",
            ApiError::Session(e) => e.code(),
            ApiError::LogIo(_) => "log_io",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::SessionTerminal => StatusCode::CONFLICT,
            ApiError::MalformedSignal(_) | ApiError::MalformedRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::InvalidLevel(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Session(SessionError::Engine(_) | SessionError::Classifier(_)) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            ApiError::Session(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::LogIo(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code(),
            message: self.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Envelope {
            error: ErrorBody,
        }
        (self.status(), Json(Envelope { error: self.body() })).into_response()
    }
}
