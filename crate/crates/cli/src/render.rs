//! Table and CSV views of command results. JSON output is plain serde.

use serde::Serialize;
use serde_json::Value;

use aiq_core::adapters::{AdapterConfig, AdapterDescriptor, ProbeResult};
use aiq_core::scale::Scale;
use aiq_core::scoring::QuotientResult;
use aiq_core::session::Session;
use aiq_core::workspace::{Product, ScoreOutcome};

pub trait Render {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;

    /// Free-form view for single results; defaults to the aligned table.
    fn table(&self) -> String {
        table(&self.header(), &self.rows())
    }
}

pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let _ = w.write_record(header);
    for row in rows {
        let _ = w.write_record(row);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

fn fixed2(v: f64) -> String {
    format!("{v:.2}")
}

fn adapter_kind(a: &AdapterDescriptor) -> &'static str {
    match a.config {
        AdapterConfig::Manual => "manual",
        AdapterConfig::Mock(_) => "mock",
        AdapterConfig::Http(_) => "http",
    }
}

impl<T: Render> Render for Vec<T> {
    fn header(&self) -> Vec<&'static str> {
        self.first().map(Render::header).unwrap_or_default()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter().flat_map(Render::rows).collect()
    }

    fn table(&self) -> String {
        if self.is_empty() {
            return "(none)\n".into();
        }
        table(&self.header(), &self.rows())
    }
}

impl Render for Scale {
    fn header(&self) -> Vec<&'static str> {
        vec!["id", "kind", "indicators", "name"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.id.clone(),
            self.kind.as_str().into(),
            self.indicator_count().to_string(),
            self.name.clone(),
        ]]
    }
}

/// Full indicator listing for `scale show`.
#[derive(Serialize)]
#[serde(transparent)]
pub struct ScaleDetail(pub Scale);

impl Render for ScaleDetail {
    fn header(&self) -> Vec<&'static str> {
        vec!["category", "indicator", "weight", "max", "name"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .categories
            .iter()
            .flat_map(|c| {
                c.indicators.iter().map(move |i| {
                    vec![
                        c.role.as_str().into(),
                        i.id.clone(),
                        i.weight.to_string(),
                        i.max_score.to_string(),
                        i.name.clone(),
                    ]
                })
            })
            .collect()
    }

    fn table(&self) -> String {
        format!(
            "{} ({}, {})\n\n{}",
            self.0.name,
            self.0.id,
            self.0.kind.as_str(),
            table(&self.header(), &self.rows())
        )
    }
}

impl Render for AdapterDescriptor {
    fn header(&self) -> Vec<&'static str> {
        vec!["id", "kind"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![self.id.clone(), adapter_kind(self).into()]]
    }
}

impl Render for Product {
    fn header(&self) -> Vec<&'static str> {
        vec!["name", "price", "currency"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![self.name.clone(), fixed2(self.price), self.currency.clone()]]
    }
}

impl Render for Session {
    fn header(&self) -> Vec<&'static str> {
        vec!["id", "state", "scale", "subject", "kind", "iq", "coverage"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let (iq, coverage) = match &self.result {
            Some(r) => (fixed2(r.value), fixed2(r.coverage)),
            None => (String::new(), String::new()),
        };
        vec![vec![
            self.id.clone(),
            self.state.to_string(),
            self.scale_id.clone(),
            self.subject.name.clone(),
            self.subject.kind.as_str().into(),
            iq,
            coverage,
        ]]
    }
}

/// Event log view for `session show`.
#[derive(Serialize)]
#[serde(transparent)]
pub struct SessionDetail(pub Session);

impl Render for SessionDetail {
    fn header(&self) -> Vec<&'static str> {
        vec!["seq", "at", "kind", "indicator", "score", "payload"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .events
            .iter()
            .map(|e| {
                vec![
                    e.seq.to_string(),
                    aiq_core::time::format(&e.at),
                    e.kind.as_str().into(),
                    e.indicator_id.clone().unwrap_or_default(),
                    e.score.map(|s| s.to_string()).unwrap_or_default(),
                    e.payload.replace('\n', " "),
                ]
            })
            .collect()
    }

    fn table(&self) -> String {
        let s = &self.0;
        let mut out = format!(
            "session  {}\nscale    {}\nsubject  {} ({})\nadapter  {}\nstate    {}\n",
            s.id,
            s.scale_id,
            s.subject.name,
            s.subject.kind.as_str(),
            s.adapter_id,
            s.state
        );
        if let Some(r) = &s.result {
            out += &format!("result   {} IQ {} (coverage {})\n", r.kind.as_str(), fixed2(r.value), fixed2(r.coverage));
        }
        out + "\n" + &table(&self.header(), &self.rows())
    }
}

impl Render for QuotientResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "value", "coverage", "scale_id", "session_id"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.kind.as_str().into(),
            fixed2(self.value),
            fixed2(self.coverage),
            self.scale_id.clone(),
            self.session_id.clone().unwrap_or_default(),
        ]]
    }

    fn table(&self) -> String {
        format!("{} IQ {}  coverage {}\n", self.kind.as_str(), fixed2(self.value), fixed2(self.coverage))
    }
}

impl Render for ScoreOutcome {
    fn header(&self) -> Vec<&'static str> {
        vec!["session_id", "iq", "coverage"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.session.id.clone(),
            fixed2(self.preview.value),
            fixed2(self.preview.coverage),
        ]]
    }

    fn table(&self) -> String {
        format!(
            "running IQ {}  coverage {}\n",
            fixed2(self.preview.value),
            fixed2(self.preview.coverage)
        )
    }
}

impl Render for ProbeResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["indicator_id", "outcome", "latency_ms", "response"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.indicator_id.clone(),
            self.outcome.as_str().into(),
            self.latency_ms.to_string(),
            self.response.clone().unwrap_or_default(),
        ]]
    }

    fn table(&self) -> String {
        let mut out = format!("{} in {} ms\n", self.outcome.as_str(), self.latency_ms);
        if let Some(r) = &self.response {
            out += r;
            out.push('\n');
        }
        out
    }
}

/// Reference datasets arrive as JSON in remote mode, so they render from it.
#[derive(Serialize)]
#[serde(transparent)]
pub struct Reference(pub Value);

impl Render for Reference {
    fn header(&self) -> Vec<&'static str> {
        vec!["rank", "subject", "kind", "absolute_iq"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let text = |v: &Value| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        self.0["entries"]
            .as_array()
            .map(|entries| {
                entries
                    .iter()
                    .map(|e| {
                        vec![
                            text(&e["rank"]),
                            text(&e["subject"]["name"]),
                            text(&e["subject"]["kind"]),
                            e["absolute_iq"].as_f64().map(fixed2).unwrap_or_default(),
                        ]
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn table(&self) -> String {
        let caption = self.0["caption"].as_str().unwrap_or_default();
        format!("{caption}\n\n{}", table(&self.header(), &self.rows()))
    }
}
