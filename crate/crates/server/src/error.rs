use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use evalboard_core::service::{ErrorBody, ServiceError};
use evalboard_core::store::StoreError;
use evalboard_runner::RunError;

/// An error response: status plus `{code, message, field?}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                field: field.map(str::to_string),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message, field)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {kind} `{id}`"), None)
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError {
            status: StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            body: e.body(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ServiceError::from(e).into()
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let (status, code) = match &e {
            RunError::Spawn { .. } | RunError::Handshake(_) => (StatusCode::SERVICE_UNAVAILABLE, "model_unavailable"),
            RunError::Timeout { .. } => (StatusCode::GATEWAY_TIMEOUT, "model_timeout"),
            _ => (StatusCode::BAD_GATEWAY, "model_error"),
        };
        ApiError::new(status, code, e.to_string(), None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
