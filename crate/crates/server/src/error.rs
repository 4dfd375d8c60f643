use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use aiq_core::{Error, ErrorCode};

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

/// HTTP status for each error code. Exhaustive on purpose: a new code does
/// not compile until it has a status.
pub fn status_for(code: ErrorCode) -> StatusCode {
    use ErrorCode as C;
    match code {
        C::BadRequest => StatusCode::BAD_REQUEST,
        C::Unauthorized => StatusCode::UNAUTHORIZED,
        C::ReadOnly => StatusCode::FORBIDDEN,
        C::UnknownScale | C::UnknownAdapter | C::UnknownDataset | C::UnknownIndicator | C::NotFound => {
            StatusCode::NOT_FOUND
        }
        C::ScaleExists | C::SessionNotOpen | C::SessionNotComplete | C::Locked | C::IdempotencyConflict => {
            StatusCode::CONFLICT
        }
        C::InvalidScale
        | C::ParseFailed
        | C::IncompleteSheet
        | C::OutOfRange
        | C::ScaleMismatch
        | C::WrongKind
        | C::NonpositivePrice
        | C::InvalidCurrency
        | C::ConfigInvalid
        | C::EmptyPrompt
        | C::MixedScales
        | C::NoSessions
        | C::CurrencyMix => StatusCode::UNPROCESSABLE_ENTITY,
        C::CorruptLog | C::BindFailed | C::DataDirUnwritable | C::Io | C::Internal => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        ApiError {
            status: status_for(code),
            body: ErrorBody {
                code,
                message: e.to_string(),
                details: e.details(),
            },
        }
    }
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Error::BadRequest(message.into()).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
