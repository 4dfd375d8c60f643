//! The line-oriented scale definition language.
//!
//! ```text
//! scale "General 2017" kind general weighting flat
//! category acquisition "Ability to acquire knowledge"
//!   indicator text-recognition "Ability to recognize text" weight 1
//!     desc "Questions posed as text"
//! ```
//!
//! Comments run from `#` to end of line. Strings are double-quoted with
//! `\"` and `\\` as the only escapes. Indentation is two spaces per level.

mod format;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{format_number, serialize_scale};
pub use parser::{parse, parse_scale, Parsed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        SourceSpan {
            line,
            column,
            length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagCode {
    // lexical
    #[serde(rename = "E_BAD_TOKEN")]
    BadToken,
    #[serde(rename = "E_UNTERMINATED_STRING")]
    UnterminatedString,
    #[serde(rename = "E_BAD_ESCAPE")]
    BadEscape,
    #[serde(rename = "E_BAD_NUMBER")]
    BadNumber,
    #[serde(rename = "E_BAD_IDENT")]
    BadIdent,
    #[serde(rename = "E_BAD_INDENT")]
    BadIndent,
    // structural
    #[serde(rename = "E_EMPTY")]
    Empty,
    #[serde(rename = "E_MISSING_HEADER")]
    MissingHeader,
    #[serde(rename = "E_DUPLICATE_HEADER")]
    DuplicateHeader,
    #[serde(rename = "E_EXPECTED")]
    Expected,
    #[serde(rename = "E_UNEXPECTED_TOKEN")]
    UnexpectedToken,
    #[serde(rename = "E_UNKNOWN_KEY")]
    UnknownKey,
    #[serde(rename = "E_KEY_ORDER")]
    KeyOrder,
    #[serde(rename = "E_UNKNOWN_KIND")]
    UnknownKind,
    #[serde(rename = "E_UNKNOWN_WEIGHTING")]
    UnknownWeighting,
    #[serde(rename = "E_UNKNOWN_ROLE")]
    UnknownRole,
    #[serde(rename = "E_UNKNOWN_SLOT")]
    UnknownSlot,
    #[serde(rename = "E_INDICATOR_OUTSIDE_CATEGORY")]
    IndicatorOutsideCategory,
    #[serde(rename = "E_DESC_WITHOUT_INDICATOR")]
    DescWithoutIndicator,
    #[serde(rename = "E_DUPLICATE_DESC")]
    DuplicateDesc,
    #[serde(rename = "E_DUPLICATE_CATEGORY")]
    DuplicateCategory,
    #[serde(rename = "E_MISSING_CATEGORY")]
    MissingCategory,
    // semantic, mirrors scale validation
    #[serde(rename = "E_CATEGORY_ORDER")]
    CategoryOrder,
    #[serde(rename = "E_EMPTY_CATEGORY")]
    EmptyCategory,
    #[serde(rename = "E_DUPLICATE_ID")]
    DuplicateId,
    #[serde(rename = "E_WEIGHT_SUM")]
    WeightSum,
    #[serde(rename = "E_CATEGORY_WEIGHT_IN_FLAT")]
    CategoryWeightInFlat,
    #[serde(rename = "E_MISSING_CATEGORY_WEIGHT")]
    MissingCategoryWeight,
    #[serde(rename = "E_NONPOSITIVE_MAX")]
    NonpositiveMax,
    #[serde(rename = "E_SLOT_MISMATCH")]
    SlotMismatch,
    #[serde(rename = "E_INVALID_SCALE")]
    InvalidScale,
    // warnings
    #[serde(rename = "W_ZERO_WEIGHT")]
    ZeroWeight,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::BadToken => "E_BAD_TOKEN",
            DiagCode::UnterminatedString => "E_UNTERMINATED_STRING",
            DiagCode::BadEscape => "E_BAD_ESCAPE",
            DiagCode::BadNumber => "E_BAD_NUMBER",
            DiagCode::BadIdent => "E_BAD_IDENT",
            DiagCode::BadIndent => "E_BAD_INDENT",
            DiagCode::Empty => "E_EMPTY",
            DiagCode::MissingHeader => "E_MISSING_HEADER",
            DiagCode::DuplicateHeader => "E_DUPLICATE_HEADER",
            DiagCode::Expected => "E_EXPECTED",
            DiagCode::UnexpectedToken => "E_UNEXPECTED_TOKEN",
            DiagCode::UnknownKey => "E_UNKNOWN_KEY",
            DiagCode::KeyOrder => "E_KEY_ORDER",
            DiagCode::UnknownKind => "E_UNKNOWN_KIND",
            DiagCode::UnknownWeighting => "E_UNKNOWN_WEIGHTING",
            DiagCode::UnknownRole => "E_UNKNOWN_ROLE",
            DiagCode::UnknownSlot => "E_UNKNOWN_SLOT",
            DiagCode::IndicatorOutsideCategory => "E_INDICATOR_OUTSIDE_CATEGORY",
            DiagCode::DescWithoutIndicator => "E_DESC_WITHOUT_INDICATOR",
            DiagCode::DuplicateDesc => "E_DUPLICATE_DESC",
            DiagCode::DuplicateCategory => "E_DUPLICATE_CATEGORY",
            DiagCode::MissingCategory => "E_MISSING_CATEGORY",
            DiagCode::CategoryOrder => "E_CATEGORY_ORDER",
            DiagCode::EmptyCategory => "E_EMPTY_CATEGORY",
            DiagCode::DuplicateId => "E_DUPLICATE_ID",
            DiagCode::WeightSum => "E_WEIGHT_SUM",
            DiagCode::CategoryWeightInFlat => "E_CATEGORY_WEIGHT_IN_FLAT",
            DiagCode::MissingCategoryWeight => "E_MISSING_CATEGORY_WEIGHT",
            DiagCode::NonpositiveMax => "E_NONPOSITIVE_MAX",
            DiagCode::SlotMismatch => "E_SLOT_MISMATCH",
            DiagCode::InvalidScale => "E_INVALID_SCALE",
            DiagCode::ZeroWeight => "W_ZERO_WEIGHT",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
    pub span: SourceSpan,
}

impl ParseDiagnostic {
    pub(crate) fn error(code: DiagCode, message: impl Into<String>, span: SourceSpan) -> Self {
        ParseDiagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            span,
        }
    }

    pub(crate) fn warning(code: DiagCode, message: impl Into<String>, span: SourceSpan) -> Self {
        ParseDiagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            span,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: code message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{file}:{}:{}: {} {}",
            self.span.line, self.span.column, self.code, self.message
        )
    }
}
