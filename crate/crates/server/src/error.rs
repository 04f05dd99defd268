use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chatpoints_core::{AnalyticsError, ProjectionError};
use chatpoints_dialogue::DialogueError;
use chatpoints_gateway::GatewayError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    UpstreamFailed,
    Busy,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict | ErrorCode::Busy => StatusCode::CONFLICT,
            ErrorCode::UpstreamFailed => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn busy(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Busy, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(message = %self.message, "internal error");
        }
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let code = match e {
            AnalyticsError::UnknownId(_) => ErrorCode::NotFound,
            AnalyticsError::ProjectionUnavailable => ErrorCode::Conflict,
            AnalyticsError::LayoutMismatch { .. } => ErrorCode::Internal,
            AnalyticsError::EmptySelection
            | AnalyticsError::DuplicateId(_)
            | AnalyticsError::InvalidK { .. } => ErrorCode::BadRequest,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<ProjectionError> for ApiError {
    fn from(e: ProjectionError) -> Self {
        let code = match e {
            ProjectionError::InvalidConfig(_)
            | ProjectionError::InfeasiblePerplexity { .. }
            | ProjectionError::TooFewPoints { .. } => ErrorCode::BadRequest,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let code = match e {
            GatewayError::InvalidRequest(_) => ErrorCode::BadRequest,
            _ => ErrorCode::UpstreamFailed,
        };
        ApiError::new(code, e.to_string()).with_detail(json!({ "retryable": e.is_transient() }))
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let message = e.to_string();
        match e {
            DialogueError::InvalidTarget(_)
            | DialogueError::EmptyText
            | DialogueError::TextTooLong { .. }
            | DialogueError::InvalidNote(_) => ApiError::bad_request(message),
            DialogueError::UnknownInstance(_)
            | DialogueError::UnknownSession(_)
            | DialogueError::UnknownTurn { .. }
            | DialogueError::UnknownNote(_) => ApiError::not_found(message),
            DialogueError::Busy(id) => {
                ApiError::busy(message).with_detail(json!({ "session_id": id }))
            }
            DialogueError::Upstream { session_id, cause } => {
                ApiError::new(ErrorCode::UpstreamFailed, message).with_detail(json!({
                    "session_id": session_id,
                    "retryable": cause.is_transient(),
                }))
            }
            DialogueError::Analytics(a) => a.into(),
            DialogueError::Registry(_) | DialogueError::Storage(_) => ApiError::internal(message),
        }
    }
}
