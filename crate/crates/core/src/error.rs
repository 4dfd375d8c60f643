use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapters::AdapterViolation;
use crate::dsl::ParseDiagnostic;
use crate::scale::Violation;

/// Machine-readable error vocabulary shared by every module, the HTTP API
/// and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    // scale model / dsl
    InvalidScale,
    ParseFailed,
    ScaleExists,
    // scoring
    IncompleteSheet,
    UnknownIndicator,
    OutOfRange,
    ScaleMismatch,
    WrongKind,
    NonpositivePrice,
    InvalidCurrency,
    // sessions
    UnknownScale,
    UnknownAdapter,
    SessionNotOpen,
    SessionNotComplete,
    CorruptLog,
    NotFound,
    Locked,
    // adapters
    ConfigInvalid,
    EmptyPrompt,
    // reference data / reports
    UnknownDataset,
    MixedScales,
    NoSessions,
    CurrencyMix,
    // service plumbing
    BadRequest,
    Unauthorized,
    ReadOnly,
    IdempotencyConflict,
    BindFailed,
    DataDirUnwritable,
    Io,
    Internal,
}

impl ErrorCode {
    pub const ALL: &'static [ErrorCode] = &[
        ErrorCode::InvalidScale,
        ErrorCode::ParseFailed,
        ErrorCode::ScaleExists,
        ErrorCode::IncompleteSheet,
        ErrorCode::UnknownIndicator,
        ErrorCode::OutOfRange,
        ErrorCode::ScaleMismatch,
        ErrorCode::WrongKind,
        ErrorCode::NonpositivePrice,
        ErrorCode::InvalidCurrency,
        ErrorCode::UnknownScale,
        ErrorCode::UnknownAdapter,
        ErrorCode::SessionNotOpen,
        ErrorCode::SessionNotComplete,
        ErrorCode::CorruptLog,
        ErrorCode::NotFound,
        ErrorCode::Locked,
        ErrorCode::ConfigInvalid,
        ErrorCode::EmptyPrompt,
        ErrorCode::UnknownDataset,
        ErrorCode::MixedScales,
        ErrorCode::NoSessions,
        ErrorCode::CurrencyMix,
        ErrorCode::BadRequest,
        ErrorCode::Unauthorized,
        ErrorCode::ReadOnly,
        ErrorCode::IdempotencyConflict,
        ErrorCode::BindFailed,
        ErrorCode::DataDirUnwritable,
        ErrorCode::Io,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::InvalidScale => "INVALID_SCALE",
            ErrorCode::ParseFailed => "PARSE_FAILED",
            ErrorCode::ScaleExists => "SCALE_EXISTS",
            ErrorCode::IncompleteSheet => "INCOMPLETE_SHEET",
            ErrorCode::UnknownIndicator => "UNKNOWN_INDICATOR",
            ErrorCode::OutOfRange => "OUT_OF_RANGE",
            ErrorCode::ScaleMismatch => "SCALE_MISMATCH",
            ErrorCode::WrongKind => "WRONG_KIND",
            ErrorCode::NonpositivePrice => "NONPOSITIVE_PRICE",
            ErrorCode::InvalidCurrency => "INVALID_CURRENCY",
            ErrorCode::UnknownScale => "UNKNOWN_SCALE",
            ErrorCode::UnknownAdapter => "UNKNOWN_ADAPTER",
            ErrorCode::SessionNotOpen => "SESSION_NOT_OPEN",
            ErrorCode::SessionNotComplete => "SESSION_NOT_COMPLETE",
            ErrorCode::CorruptLog => "CORRUPT_LOG",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Locked => "LOCKED",
            ErrorCode::ConfigInvalid => "CONFIG_INVALID",
            ErrorCode::EmptyPrompt => "EMPTY_PROMPT",
            ErrorCode::UnknownDataset => "UNKNOWN_DATASET",
            ErrorCode::MixedScales => "MIXED_SCALES",
            ErrorCode::NoSessions => "NO_SESSIONS",
            ErrorCode::CurrencyMix => "CURRENCY_MIX",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::Unauthorized => "UNAUTHORIZED",
            ErrorCode::ReadOnly => "READ_ONLY",
            ErrorCode::IdempotencyConflict => "IDEMPOTENCY_CONFLICT",
            ErrorCode::BindFailed => "BIND_FAILED",
            ErrorCode::DataDirUnwritable => "DATA_DIR_UNWRITABLE",
            ErrorCode::Io => "IO",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    /// True for errors caused by bad input (a scale, a score, a request body)
    /// rather than by the runtime environment.
    pub fn is_validation(self) -> bool {
        matches!(
            self,
            ErrorCode::InvalidScale
                | ErrorCode::ParseFailed
                | ErrorCode::IncompleteSheet
                | ErrorCode::UnknownIndicator
                | ErrorCode::OutOfRange
                | ErrorCode::ScaleMismatch
                | ErrorCode::WrongKind
                | ErrorCode::NonpositivePrice
                | ErrorCode::InvalidCurrency
                | ErrorCode::ConfigInvalid
                | ErrorCode::EmptyPrompt
                | ErrorCode::MixedScales
                | ErrorCode::NoSessions
                | ErrorCode::CurrencyMix
                | ErrorCode::BadRequest
        )
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCode::ALL
            .iter()
            .copied()
            .find(|code| code.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("scale failed validation ({} violation(s))", .0.len())]
    InvalidScale(Vec<Violation>),
    #[error("scale text failed to parse ({} diagnostic(s))", .0.len())]
    ParseFailed(Vec<ParseDiagnostic>),
    #[error("a different scale is already registered as {0}")]
    ScaleExists(String),

    #[error("score sheet is incomplete; missing {}", .missing.join(", "))]
    IncompleteSheet { missing: Vec<String> },
    #[error("indicator {0} is not part of the scale")]
    UnknownIndicator(String),
    #[error("score {score} for {indicator} is outside [0, {max}]")]
    OutOfRange { indicator: String, score: f64, max: f64 },
    #[error("score sheet references scale {sheet} but scale {scale} was supplied")]
    ScaleMismatch { sheet: String, scale: String },
    #[error("expected a {expected} quotient, got {actual}")]
    WrongKind { expected: String, actual: String },
    #[error("price must be positive, got {0}")]
    NonpositivePrice(f64),
    #[error("currency {0:?} is not a 3-letter uppercase ISO-4217 code")]
    InvalidCurrency(String),

    #[error("unknown scale {0}")]
    UnknownScale(String),
    #[error("unknown adapter {0}")]
    UnknownAdapter(String),
    #[error("session {id} is {state}, not open")]
    SessionNotOpen { id: String, state: String },
    #[error("session {0} is not complete")]
    SessionNotComplete(String),
    #[error("session log {id} is corrupt at seq {seq}: {reason}")]
    CorruptLog { id: String, seq: u64, reason: String },
    #[error("{0} not found")]
    NotFound(String),
    #[error("data directory {0} is locked by another writer")]
    Locked(String),

    #[error("adapter configuration invalid: {}", .0.iter().map(|v| v.code.as_str()).collect::<Vec<_>>().join(", "))]
    ConfigInvalid(Vec<AdapterViolation>),
    #[error("probe prompt must be nonempty")]
    EmptyPrompt,

    #[error("unknown reference dataset {0}")]
    UnknownDataset(String),
    #[error("sessions span several scales: {}", .0.join(", "))]
    MixedScales(Vec<String>),
    #[error("no sessions to report")]
    NoSessions,
    #[error("currencies differ: {}", .0.join(", "))]
    CurrencyMix(Vec<String>),

    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("service is read-only")]
    ReadOnly,
    #[error("idempotency key {0} was already used with a different request")]
    IdempotencyConflict(String),
    #[error("cannot bind {addr}: {reason}")]
    BindFailed { addr: String, reason: String },
    #[error("data directory {path} is not writable: {reason}")]
    DataDirUnwritable { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::InvalidScale(_) => ErrorCode::InvalidScale,
            Error::ParseFailed(_) => ErrorCode::ParseFailed,
            Error::ScaleExists(_) => ErrorCode::ScaleExists,
            Error::IncompleteSheet { .. } => ErrorCode::IncompleteSheet,
            Error::UnknownIndicator(_) => ErrorCode::UnknownIndicator,
            Error::OutOfRange { .. } => ErrorCode::OutOfRange,
            Error::ScaleMismatch { .. } => ErrorCode::ScaleMismatch,
            Error::WrongKind { .. } => ErrorCode::WrongKind,
            Error::NonpositivePrice(_) => ErrorCode::NonpositivePrice,
            Error::InvalidCurrency(_) => ErrorCode::InvalidCurrency,
            Error::UnknownScale(_) => ErrorCode::UnknownScale,
            Error::UnknownAdapter(_) => ErrorCode::UnknownAdapter,
            Error::SessionNotOpen { .. } => ErrorCode::SessionNotOpen,
            Error::SessionNotComplete(_) => ErrorCode::SessionNotComplete,
            Error::CorruptLog { .. } => ErrorCode::CorruptLog,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::Locked(_) => ErrorCode::Locked,
            Error::ConfigInvalid(_) => ErrorCode::ConfigInvalid,
            Error::EmptyPrompt => ErrorCode::EmptyPrompt,
            Error::UnknownDataset(_) => ErrorCode::UnknownDataset,
            Error::MixedScales(_) => ErrorCode::MixedScales,
            Error::NoSessions => ErrorCode::NoSessions,
            Error::CurrencyMix(_) => ErrorCode::CurrencyMix,
            Error::BadRequest(_) => ErrorCode::BadRequest,
            Error::Unauthorized => ErrorCode::Unauthorized,
            Error::ReadOnly => ErrorCode::ReadOnly,
            Error::IdempotencyConflict(_) => ErrorCode::IdempotencyConflict,
            Error::BindFailed { .. } => ErrorCode::BindFailed,
            Error::DataDirUnwritable { .. } => ErrorCode::DataDirUnwritable,
            Error::Io { .. } => ErrorCode::Io,
            Error::Internal(_) => ErrorCode::Internal,
        }
    }

    /// Structured payload for API error bodies and `--output json`.
    pub fn details(&self) -> Option<serde_json::Value> {
        use serde_json::json;
        match self {
            Error::InvalidScale(v) => Some(json!({ "violations": v })),
            Error::ParseFailed(d) => Some(json!({ "diagnostics": d })),
            Error::IncompleteSheet { missing } => Some(json!({ "missing": missing })),
            Error::OutOfRange {
                indicator,
                score,
                max,
            } => Some(json!({ "indicator_id": indicator, "score": score, "max_score": max })),
            Error::CorruptLog { seq, reason, .. } => {
                Some(json!({ "seq": seq, "reason": reason }))
            }
            Error::ConfigInvalid(v) => Some(json!({ "violations": v })),
            Error::MixedScales(s) => Some(json!({ "scale_ids": s })),
            Error::CurrencyMix(c) => Some(json!({ "currencies": c })),
            _ => None,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_through_strings() {
        for code in ErrorCode::ALL {
            assert_eq!(code.as_str().parse::<ErrorCode>(), Ok(*code));
            let json = serde_json::to_string(code).unwrap();
            assert_eq!(json, format!("\"{}\"", code.as_str()));
        }
    }
}
