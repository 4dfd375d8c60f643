//! Ranking and Value IQ tables with CSV, JSON and Markdown export.

use std::cmp::Ordering;
use std::fmt;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::{load_reference, Dataset};
use crate::scoring::{compute_value_iq, PositivePrice, QuotientResult};
use crate::session::{Session, SessionState};
use crate::subject::SubjectKind;
use crate::time::Timestamp;

pub const IQ_LABEL: &str = "IQ";
pub const REFERENCE_LABEL: &str = "Absolute IQ (reference)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    Session,
    Reference,
}

impl RowSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RowSource::Session => "session",
            RowSource::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: u32,
    pub subject: String,
    pub kind: SubjectKind,
    pub iq: f64,
    /// Absent for reference rows, whose coverage is unknown.
    #[serde(default)]
    pub coverage: Option<f64>,
    pub source: RowSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub scale_id: Option<String>,
    pub rows: Vec<RankingRow>,
    #[serde(with = "crate::time")]
    pub generated_at: Timestamp,
    pub reference_overlay: Option<Dataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub subject: String,
    pub service_iq: f64,
    pub price: f64,
    pub currency: String,
    pub value_iq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub currency: Option<String>,
    pub rows: Vec<ValueRow>,
}

/// One product to price: a subject's Service IQ result and what it costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueInput {
    pub subject: String,
    pub result: QuotientResult,
    pub price: PositivePrice,
}

fn by_value_then_name(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Ranks completed sessions, optionally merged with a reference table.
///
/// Rows sort by IQ descending then subject ascending; equal IQs share the
/// smaller rank and the following rank is skipped. `generated_at` is the
/// latest `updated_at` among the sessions (the Unix epoch when there are
/// none) so identical inputs give identical reports.
pub fn build_ranking(sessions: &[Session], scale_id: Option<&str>, overlay: Option<Dataset>) -> Result<RankingReport> {
    if sessions.is_empty() && overlay.is_none() {
        return Err(Error::NoSessions);
    }
    let mut scales: BTreeSet<&str> = sessions.iter().map(|s| s.scale_id.as_str()).collect();
    if let Some(id) = scale_id {
        if !scales.is_empty() && (scales.len() > 1 || !scales.contains(id)) {
            scales.insert(id);
        }
    }
    if scales.len() > 1 {
        return Err(Error::MixedScales(scales.into_iter().map(str::to_string).collect()));
    }

    let mut rows = Vec::with_capacity(sessions.len() + 10);
    for s in sessions {
        let result = match (&s.result, s.state) {
            (Some(r), SessionState::Complete) => r,
            _ => return Err(Error::SessionNotComplete(s.id.clone())),
        };
        rows.push(RankingRow {
            rank: 0,
            subject: s.subject.name.clone(),
            kind: s.subject.kind,
            iq: result.value,
            coverage: Some(result.coverage),
            source: RowSource::Session,
            session_id: Some(s.id.clone()),
        });
    }
    if let Some(dataset) = overlay {
        rows.extend(load_reference(dataset).into_iter().map(|e| RankingRow {
            rank: 0,
            subject: e.subject.name,
            kind: e.subject.kind,
            iq: e.absolute_iq,
            coverage: None,
            source: RowSource::Reference,
            session_id: None,
        }));
    }
    rows.sort_by(|a, b| {
        by_value_then_name((a.iq, &a.subject), (b.iq, &b.subject))
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    for i in 0..rows.len() {
        rows[i].rank = if i > 0 && rows[i].iq == rows[i - 1].iq {
            rows[i - 1].rank
        } else {
            i as u32 + 1
        };
    }

    let generated_at = sessions
        .iter()
        .map(|s| s.updated_at)
        .max()
        .unwrap_or(chrono::DateTime::UNIX_EPOCH);
    Ok(RankingReport {
        scale_id: scale_id
            .map(str::to_string)
            .or_else(|| scales.into_iter().next().map(str::to_string)),
        rows,
        generated_at,
        reference_overlay: overlay,
    })
}

/// Value IQ table, most intelligence per unit of money first.
pub fn build_value_report(inputs: &[ValueInput]) -> Result<ValueReport> {
    let currencies: BTreeSet<&str> = inputs.iter().map(|i| i.price.currency()).collect();
    if currencies.len() > 1 {
        return Err(Error::CurrencyMix(currencies.into_iter().map(str::to_string).collect()));
    }
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        let value = compute_value_iq(&input.result, &input.price)?;
        rows.push(ValueRow {
            subject: input.subject.clone(),
            service_iq: input.result.value,
            price: input.price.amount(),
            currency: input.price.currency().to_string(),
            value_iq: value.value,
            session_id: input.result.session_id.clone(),
        });
    }
    rows.sort_by(|a, b| {
        by_value_then_name((a.value_iq, &a.subject), (b.value_iq, &b.subject))
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    Ok(ValueReport {
        currency: currencies.into_iter().next().map(str::to_string),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
    Markdown,
}

impl ExportFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Markdown => "markdown",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(Error::BadRequest(format!("unknown export format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Ranking(RankingReport),
    Value(ValueReport),
}

fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn csv_bytes(header: &[&str], records: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let _ = w.write_record(header);
    for r in records {
        let _ = w.write_record(r);
    }
    w.into_inner().unwrap_or_default()
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

/// Deterministic bytes for a report.
///
/// CSV (RFC 4180, CRLF) and Markdown render numbers with exactly two
/// decimals. JSON keeps full precision so that it parses back into an equal
/// report.
pub fn export_report(report: &Report, format: ExportFormat) -> Vec<u8> {
    match (report, format) {
        (_, ExportFormat::Json) => {
            let mut out = match report {
                Report::Ranking(r) => serde_json::to_vec_pretty(r),
                Report::Value(v) => serde_json::to_vec_pretty(v),
            }
            .unwrap_or_default();
            out.push(b'\n');
            out
        }
        (Report::Ranking(r), ExportFormat::Csv) => csv_bytes(
            &["rank", "subject", "iq", "coverage", "source"],
            r.rows
                .iter()
                .map(|row| {
                    vec![
                        row.rank.to_string(),
                        row.subject.clone(),
                        fixed2(row.iq),
                        row.coverage.map(fixed2).unwrap_or_default(),
                        row.source.as_str().to_string(),
                    ]
                })
                .collect(),
        ),
        (Report::Value(v), ExportFormat::Csv) => csv_bytes(
            &["subject", "service_iq", "price", "currency", "value_iq"],
            v.rows
                .iter()
                .map(|row| {
                    vec![
                        row.subject.clone(),
                        fixed2(row.service_iq),
                        fixed2(row.price),
                        row.currency.clone(),
                        fixed2(row.value_iq),
                    ]
                })
                .collect(),
        ),
        (Report::Ranking(r), ExportFormat::Markdown) => {
            let mut out = String::new();
            let _ = writeln!(out, "## Ranking: {}", r.scale_id.as_deref().unwrap_or("reference only"));
            out.push('\n');
            if let Some(d) = r.reference_overlay {
                let _ = writeln!(out, "Reference overlay: {d}. Reference rows show {REFERENCE_LABEL}.");
                out.push('\n');
            }
            out.push_str("| Rank | Subject | Value | Label | Coverage |\n");
            out.push_str("|---:|---|---:|---|---:|\n");
            for row in &r.rows {
                let label = match row.source {
                    RowSource::Session => IQ_LABEL,
                    RowSource::Reference => REFERENCE_LABEL,
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    row.rank,
                    md_cell(&row.subject),
                    fixed2(row.iq),
                    label,
                    row.coverage.map(fixed2).unwrap_or_default()
                );
            }
            out.into_bytes()
        }
        (Report::Value(v), ExportFormat::Markdown) => {
            let mut out = String::new();
            let _ = writeln!(out, "## Value IQ ({})", v.currency.as_deref().unwrap_or("no products"));
            out.push('\n');
            out.push_str("| Subject | Service IQ | Price | Currency | Value IQ |\n");
            out.push_str("|---|---:|---:|---|---:|\n");
            for row in &v.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    md_cell(&row.subject),
                    fixed2(row.service_iq),
                    fixed2(row.price),
                    row.currency,
                    fixed2(row.value_iq)
                );
            }
            out.into_bytes()
        }
    }
}
