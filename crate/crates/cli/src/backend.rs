//! One set of operations over either a local data directory or a remote API.

use std::time::Duration;

use reqwest::{Method, StatusCode, Url};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use aiq_core::adapters::{AdapterDescriptor, ProbeResult};
use aiq_core::reference::{reference_dataset, Dataset};
use aiq_core::report::{export_report, ExportFormat, Report};
use aiq_core::scale::Scale;
use aiq_core::scoring::{CompletionPolicy, QuotientResult};
use aiq_core::session::{Session, SessionFilter};
use aiq_core::subject::SubjectDescriptor;
use aiq_core::workspace::{Product, ScoreOutcome, Workspace};
use aiq_core::ErrorCode;
use aiq_server::{ApiError, ErrorBody};

pub type Res<T> = Result<T, ErrorBody>;

pub fn failure(e: aiq_core::Error) -> ErrorBody {
    ApiError::from(e).body
}

fn transport(code: ErrorCode, message: String) -> ErrorBody {
    ErrorBody {
        code,
        message,
        details: None,
    }
}

/// Attempts per request; POSTs carry one idempotency key across attempts.
const ATTEMPTS: u32 = 3;

pub struct Remote {
    client: reqwest::Client,
    base: Url,
    token: Option<String>,
}

impl Remote {
    pub fn new(api_url: &str, token: Option<String>) -> Res<Self> {
        let mut base = Url::parse(api_url)
            .map_err(|e| transport(ErrorCode::BadRequest, format!("invalid API URL {api_url}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(transport(ErrorCode::BadRequest, format!("invalid API URL {api_url}")));
        }
        base.path_segments_mut()
            .expect("checked above")
            .pop_if_empty()
            .push("v1");
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| transport(ErrorCode::Internal, e.to_string()))?;
        Ok(Remote {
            client,
            base,
            token: token.filter(|t| !t.is_empty()),
        })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut().expect("base URL").extend(segments);
        url
    }

    async fn send(&self, method: Method, segments: &[&str], query: &[(&str, String)], body: Option<Vec<u8>>) -> Res<Vec<u8>> {
        let url = self.url(segments);
        let key = uuid::Uuid::new_v4().to_string();
        let mut attempt = 1;
        loop {
            let mut request = self.client.request(method.clone(), url.clone()).query(query);
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            if let Some(body) = &body {
                request = request
                    .header(aiq_server::idempotency::HEADER, &key)
                    .body(body.clone());
            }
            match request.send().await {
                Ok(response) => return Self::read(response).await,
                Err(e) if e.is_connect() && attempt < ATTEMPTS => {
                    tokio::time::sleep(Duration::from_millis(100 * u64::from(attempt))).await;
                    attempt += 1;
                }
                Err(e) => return Err(transport(ErrorCode::Io, format!("request to {url} failed: {e}"))),
            }
        }
    }

    async fn read(response: reqwest::Response) -> Res<Vec<u8>> {
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| transport(ErrorCode::Io, format!("reading response failed: {e}")))?;
        if status.is_success() {
            return Ok(bytes.to_vec());
        }
        Err(serde_json::from_slice(&bytes).unwrap_or_else(|_| {
            let code = if status == StatusCode::UNAUTHORIZED {
                ErrorCode::Unauthorized
            } else {
                ErrorCode::Internal
            };
            transport(code, format!("server answered {status}"))
        }))
    }

    async fn get<T: DeserializeOwned>(&self, segments: &[&str], query: &[(&str, String)]) -> Res<T> {
        decode(&self.send(Method::GET, segments, query, None).await?)
    }

    async fn post<T: DeserializeOwned>(&self, segments: &[&str], body: &impl Serialize) -> Res<T> {
        let body = serde_json::to_vec(body).map_err(|e| transport(ErrorCode::Internal, e.to_string()))?;
        decode(&self.send(Method::POST, segments, &[], Some(body)).await?)
    }
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Res<T> {
    serde_json::from_slice(bytes).map_err(|e| transport(ErrorCode::Internal, format!("unexpected response: {e}")))
}

fn optional(query: &mut Vec<(&'static str, String)>, name: &'static str, value: Option<impl ToString>) {
    if let Some(v) = value {
        query.push((name, v.to_string()));
    }
}

pub enum Backend {
    Local(Workspace),
    Remote(Remote),
}

impl Backend {
    pub async fn scales(&self) -> Res<Vec<Scale>> {
        match self {
            Backend::Local(ws) => ws.scales().map_err(failure),
            Backend::Remote(r) => r.get(&["scales"], &[]).await,
        }
    }

    pub async fn scale(&self, id: &str) -> Res<Scale> {
        match self {
            Backend::Local(ws) => ws.scale(id).map_err(failure),
            Backend::Remote(r) => r.get(&["scales", id], &[]).await,
        }
    }

    pub async fn add_scale(&self, text: &str, id: Option<&str>) -> Res<Scale> {
        match self {
            Backend::Local(ws) => ws.add_scale(text, id).map_err(failure),
            Backend::Remote(r) => {
                let mut query = Vec::new();
                optional(&mut query, "id", id);
                decode(&r.send(Method::POST, &["scales"], &query, Some(text.as_bytes().to_vec())).await?)
            }
        }
    }

    pub async fn adapters(&self) -> Res<Vec<AdapterDescriptor>> {
        match self {
            Backend::Local(ws) => ws.adapters().map_err(failure),
            Backend::Remote(r) => r.get(&["adapters"], &[]).await,
        }
    }

    pub async fn add_adapter(&self, adapter: AdapterDescriptor) -> Res<AdapterDescriptor> {
        match self {
            Backend::Local(ws) => ws.add_adapter(adapter).map_err(failure),
            Backend::Remote(r) => r.post(&["adapters"], &adapter).await,
        }
    }

    pub async fn products(&self) -> Res<Vec<Product>> {
        match self {
            Backend::Local(ws) => ws.products().map_err(failure),
            Backend::Remote(r) => r.get(&["products"], &[]).await,
        }
    }

    pub async fn add_product(&self, product: Product) -> Res<Product> {
        match self {
            Backend::Local(ws) => ws.add_product(product).map_err(failure),
            Backend::Remote(r) => r.post(&["products"], &product).await,
        }
    }

    pub async fn create_session(&self, scale_id: &str, subject: SubjectDescriptor, adapter_id: &str) -> Res<Session> {
        match self {
            Backend::Local(ws) => ws.create_session(scale_id, subject, adapter_id).map_err(failure),
            Backend::Remote(r) => {
                let body = json!({"scale_id": scale_id, "subject": subject, "adapter_id": adapter_id});
                r.post(&["sessions"], &body).await
            }
        }
    }

    pub async fn session(&self, id: &str) -> Res<Session> {
        match self {
            Backend::Local(ws) => ws.session(id).map_err(failure),
            Backend::Remote(r) => r.get(&["sessions", id], &[]).await,
        }
    }

    pub async fn sessions(&self, filter: &SessionFilter) -> Res<Vec<Session>> {
        match self {
            Backend::Local(ws) => ws.sessions(filter).map_err(failure),
            Backend::Remote(r) => {
                let mut query = Vec::new();
                optional(&mut query, "state", filter.state);
                optional(&mut query, "subject_kind", filter.subject_kind.map(|k| k.as_str()));
                optional(&mut query, "scale_id", filter.scale_id.as_ref());
                optional(&mut query, "subject", filter.subject.as_ref());
                optional(&mut query, "offset", filter.offset);
                optional(&mut query, "limit", filter.limit);
                r.get(&["sessions"], &query).await
            }
        }
    }

    pub async fn record_score(&self, id: &str, indicator_id: &str, score: f64, note: Option<&str>) -> Res<ScoreOutcome> {
        match self {
            Backend::Local(ws) => ws.record_score(id, indicator_id, score, note).map_err(failure),
            Backend::Remote(r) => {
                let body = json!({"indicator_id": indicator_id, "score": score, "note": note});
                r.post(&["sessions", id, "scores"], &body).await
            }
        }
    }

    pub async fn probe(&self, id: &str, indicator_id: &str, prompt: &str) -> Res<ProbeResult> {
        match self {
            Backend::Local(ws) => ws.probe(id, indicator_id, prompt).await.map_err(failure),
            Backend::Remote(r) => {
                let body = json!({"indicator_id": indicator_id, "prompt": prompt});
                r.post(&["sessions", id, "probe"], &body).await
            }
        }
    }

    pub async fn add_note(&self, id: &str, indicator_id: Option<&str>, note: &str) -> Res<Session> {
        match self {
            Backend::Local(ws) => ws.add_note(id, indicator_id, note).map_err(failure),
            Backend::Remote(r) => {
                let body = json!({"indicator_id": indicator_id, "note": note});
                r.post(&["sessions", id, "notes"], &body).await
            }
        }
    }

    pub async fn complete(&self, id: &str, policy: CompletionPolicy) -> Res<QuotientResult> {
        match self {
            Backend::Local(ws) => ws.complete(id, policy).map_err(failure),
            Backend::Remote(r) => r.post(&["sessions", id, "complete"], &json!({"policy": policy})).await,
        }
    }

    pub async fn abandon(&self, id: &str) -> Res<Session> {
        match self {
            Backend::Local(ws) => ws.abandon(id).map_err(failure),
            Backend::Remote(r) => r.post(&["sessions", id, "abandon"], &json!({})).await,
        }
    }

    /// Exported report bytes, identical in both modes.
    pub async fn ranking(&self, scale_id: Option<&str>, overlay: Option<Dataset>, format: ExportFormat) -> Res<Vec<u8>> {
        match self {
            Backend::Local(ws) => {
                let report = ws.ranking(scale_id, overlay).map_err(failure)?;
                Ok(export_report(&Report::Ranking(report), format))
            }
            Backend::Remote(r) => {
                let mut query = vec![("format", format.to_string())];
                optional(&mut query, "scale_id", scale_id);
                optional(&mut query, "overlay", overlay);
                r.send(Method::GET, &["reports", "ranking"], &query, None).await
            }
        }
    }

    pub async fn value_report(&self, currency: Option<&str>, format: ExportFormat) -> Res<Vec<u8>> {
        match self {
            Backend::Local(ws) => {
                let report = ws.value_report(currency).map_err(failure)?;
                Ok(export_report(&Report::Value(report), format))
            }
            Backend::Remote(r) => {
                let mut query = vec![("format", format.to_string())];
                optional(&mut query, "currency", currency);
                r.send(Method::GET, &["reports", "value"], &query, None).await
            }
        }
    }

    pub async fn reference(&self, dataset: Dataset) -> Res<Value> {
        match self {
            Backend::Local(_) => serde_json::to_value(reference_dataset(dataset))
                .map_err(|e| transport(ErrorCode::Internal, e.to_string())),
            Backend::Remote(r) => r.get(&["reference", dataset.as_str()], &[]).await,
        }
    }
}
