//! Systems-under-test: manual relay, canned mock tables and remote HTTP
//! endpoints.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BACKOFF_BASE_MS: u64 = 250;
const BACKOFF_FACTOR: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterDescriptor {
    pub id: String,
    #[serde(flatten)]
    pub config: AdapterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterConfig {
    Manual,
    Mock(MockConfig),
    Http(HttpConfig),
}

impl AdapterConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AdapterConfig::Manual => "manual",
            AdapterConfig::Mock(_) => "mock",
            AdapterConfig::Http(_) => "http",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    /// Exact prompt → response.
    #[serde(default)]
    pub table: BTreeMap<String, String>,
    /// Response for prompts missing from the table; without one they are
    /// refused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

/// Request template for a remote endpoint.
///
/// `url`, header values and `body` may reference environment variables as
/// `{{env:NAME}}`; `body` substitutes the prompt for `{{prompt}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub url: String,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
    /// Dot path into the JSON response body (`choices.0.text`); empty means
    /// the whole body.
    #[serde(default)]
    pub response_path: String,
    pub timeout_ms: i64,
    #[serde(default)]
    pub retries: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_rps: Option<f64>,
}

fn default_method() -> String {
    "POST".into()
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, timeout_ms: i64) -> Self {
        HttpConfig {
            url: url.into(),
            method: default_method(),
            headers: BTreeMap::new(),
            body: String::new(),
            response_path: String::new(),
            timeout_ms,
            retries: 0,
            backoff_base_ms: None,
            rate_limit_rps: None,
        }
    }
}

/// Adapters every data directory starts with.
pub fn builtin_adapters() -> Vec<AdapterDescriptor> {
    vec![
        AdapterDescriptor {
            id: "manual".into(),
            config: AdapterConfig::Manual,
        },
        AdapterDescriptor {
            id: "mock".into(),
            config: AdapterConfig::Mock(MockConfig {
                table: BTreeMap::new(),
                default: Some("mock response".into()),
            }),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdapterViolationCode {
    IdInvalid,
    UrlNotAbsolute,
    UrlSchemeUnsupported,
    TimeoutNonpositive,
    RetryNegative,
    BackoffNegative,
    RateLimitNonpositive,
    MethodInvalid,
    HeaderInvalid,
    PlaceholderUnknown,
    EnvNameInvalid,
    EnvMissing,
}

impl AdapterViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterViolationCode::IdInvalid => "ID_INVALID",
            AdapterViolationCode::UrlNotAbsolute => "URL_NOT_ABSOLUTE",
            AdapterViolationCode::UrlSchemeUnsupported => "URL_SCHEME_UNSUPPORTED",
            AdapterViolationCode::TimeoutNonpositive => "TIMEOUT_NONPOSITIVE",
            AdapterViolationCode::RetryNegative => "RETRY_NEGATIVE",
            AdapterViolationCode::BackoffNegative => "BACKOFF_NEGATIVE",
            AdapterViolationCode::RateLimitNonpositive => "RATE_LIMIT_NONPOSITIVE",
            AdapterViolationCode::MethodInvalid => "METHOD_INVALID",
            AdapterViolationCode::HeaderInvalid => "HEADER_INVALID",
            AdapterViolationCode::PlaceholderUnknown => "PLACEHOLDER_UNKNOWN",
            AdapterViolationCode::EnvNameInvalid => "ENV_NAME_INVALID",
            AdapterViolationCode::EnvMissing => "ENV_MISSING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterViolation {
    pub code: AdapterViolationCode,
    pub field: String,
    pub message: String,
}

impl AdapterViolation {
    fn new(code: AdapterViolationCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        AdapterViolation {
            code,
            field: field.into(),
            message: message.into(),
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn valid_env_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Prompt,
    Env(&'a str),
    Unknown(&'a str),
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else {
            break;
        };
        if start > 0 {
            out.push(Piece::Text(&rest[..start]));
        }
        let name = rest[start + 2..start + 2 + len].trim();
        out.push(match name {
            "prompt" => Piece::Prompt,
            _ => match name.strip_prefix("env:") {
                Some(var) => Piece::Env(var.trim()),
                None => Piece::Unknown(name),
            },
        });
        rest = &rest[start + 4 + len..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

fn check_template(field: &str, template: &str, allow_prompt: bool, out: &mut Vec<AdapterViolation>) {
    for p in pieces(template) {
        match p {
            Piece::Prompt if !allow_prompt => out.push(AdapterViolation::new(
                AdapterViolationCode::PlaceholderUnknown,
                field,
                "{{prompt}} is only substituted in the body",
            )),
            Piece::Env(name) if !valid_env_name(name) => out.push(AdapterViolation::new(
                AdapterViolationCode::EnvNameInvalid,
                field,
                format!("{name:?} is not a valid environment variable name"),
            )),
            Piece::Unknown(name) => out.push(AdapterViolation::new(
                AdapterViolationCode::PlaceholderUnknown,
                field,
                format!("unknown placeholder {{{{{name}}}}}"),
            )),
            _ => {}
        }
    }
}

/// Checks descriptor invariants. Pure: no network traffic and no
/// environment lookups.
pub fn validate_adapter(adapter: &AdapterDescriptor) -> Vec<AdapterViolation> {
    use AdapterViolationCode as C;
    let mut out = Vec::new();
    if !valid_id(&adapter.id) {
        out.push(AdapterViolation::new(
            C::IdInvalid,
            "id",
            "id must be nonempty and use only letters, digits, '-', '_' or '.'",
        ));
    }
    let AdapterConfig::Http(http) = &adapter.config else {
        return out;
    };
    check_template("url", &http.url, false, &mut out);
    let probe_url = render(&http.url, "", false, |_| Some("x".into())).unwrap_or_default();
    match url::Url::parse(&probe_url) {
        Ok(u) if !matches!(u.scheme(), "http" | "https") => out.push(AdapterViolation::new(
            C::UrlSchemeUnsupported,
            "url",
            format!("scheme {:?} is not http or https", u.scheme()),
        )),
        Ok(_) => {}
        Err(e) => out.push(AdapterViolation::new(
            C::UrlNotAbsolute,
            "url",
            format!("{:?} is not an absolute URL: {e}", http.url),
        )),
    }
    if http.timeout_ms <= 0 {
        out.push(AdapterViolation::new(
            C::TimeoutNonpositive,
            "timeout_ms",
            format!("timeout must be positive, got {}", http.timeout_ms),
        ));
    }
    if http.retries < 0 {
        out.push(AdapterViolation::new(
            C::RetryNegative,
            "retries",
            format!("retry count must be nonnegative, got {}", http.retries),
        ));
    }
    if http.backoff_base_ms.is_some_and(|b| b < 0) {
        out.push(AdapterViolation::new(
            C::BackoffNegative,
            "backoff_base_ms",
            "backoff base must be nonnegative",
        ));
    }
    if http.rate_limit_rps.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
        out.push(AdapterViolation::new(
            C::RateLimitNonpositive,
            "rate_limit_rps",
            "rate limit must be a positive number of requests per second",
        ));
    }
    if reqwest::Method::from_bytes(http.method.as_bytes()).is_err() || http.method.is_empty() {
        out.push(AdapterViolation::new(
            C::MethodInvalid,
            "method",
            format!("{:?} is not an HTTP method", http.method),
        ));
    }
    for (name, value) in &http.headers {
        let field = format!("headers.{name}");
        if reqwest::header::HeaderName::from_bytes(name.as_bytes()).is_err() {
            out.push(AdapterViolation::new(
                C::HeaderInvalid,
                &field,
                format!("{name:?} is not a valid header name"),
            ));
        }
        check_template(&field, value, false, &mut out);
    }
    check_template("body", &http.body, true, &mut out);
    out
}

/// Substitutes placeholders. `{{prompt}}` is JSON-escaped when it sits inside
/// a JSON string literal of the template (when `json_aware`), verbatim
/// otherwise. Returns the first unresolved environment variable as the error.
fn render(
    template: &str,
    prompt: &str,
    json_aware: bool,
    env: impl Fn(&str) -> Option<String>,
) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(template.len() + prompt.len());
    let mut in_string = false;
    let mut escaped = false;
    let insert = |out: &mut String, value: &str, in_string: bool| {
        if json_aware && in_string {
            let quoted = serde_json::to_string(value).unwrap_or_default();
            out.push_str(&quoted[1..quoted.len() - 1]);
        } else {
            out.push_str(value);
        }
    };
    for piece in pieces(template) {
        match piece {
            Piece::Text(text) => {
                for c in text.chars() {
                    if escaped {
                        escaped = false;
                    } else if in_string && c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        in_string = !in_string;
                    }
                }
                out.push_str(text);
            }
            Piece::Prompt => insert(&mut out, prompt, in_string),
            Piece::Env(name) => {
                let value = env(name).ok_or_else(|| name.to_string())?;
                insert(&mut out, &value, in_string);
            }
            Piece::Unknown(name) => {
                out.push_str("{{");
                out.push_str(name);
                out.push_str("}}");
            }
        }
    }
    Ok(out)
}

/// Renders a body template against `prompt`, resolving `{{env:NAME}}` from
/// the process environment.
pub fn render_body(template: &str, prompt: &str) -> Result<String> {
    render(template, prompt, true, |n| std::env::var(n).ok()).map_err(env_missing("body"))
}

fn env_missing(field: &'static str) -> impl Fn(String) -> Error {
    move |name| {
        Error::ConfigInvalid(vec![AdapterViolation::new(
            AdapterViolationCode::EnvMissing,
            field,
            format!("environment variable {name} is not set"),
        )])
    }
}

/// Follows a dot path (object keys and array indices) through a JSON body.
/// An empty path yields the body unchanged; string leaves are unquoted.
pub fn extract_response(body: &str, path: &str) -> Option<String> {
    if path.is_empty() {
        return Some(body.to_string());
    }
    let root: serde_json::Value = serde_json::from_str(body).ok()?;
    let mut cur = &root;
    for seg in path.split('.') {
        cur = match cur {
            serde_json::Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            serde_json::Value::Object(map) => map.get(seg)?,
            _ => return None,
        };
    }
    match cur {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Null => None,
        other => Some(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Ok,
    Timeout,
    TransportError,
    Refused,
}

impl ProbeOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeOutcome::Ok => "ok",
            ProbeOutcome::Timeout => "timeout",
            ProbeOutcome::TransportError => "transport_error",
            ProbeOutcome::Refused => "refused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub indicator_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub outcome: ProbeOutcome,
    pub latency_ms: u64,
}

impl ProbeResult {
    fn new(indicator_id: &str, prompt: &str, outcome: ProbeOutcome, response: Option<String>, latency: Duration) -> Self {
        ProbeResult {
            indicator_id: indicator_id.to_string(),
            prompt: prompt.to_string(),
            response: if outcome == ProbeOutcome::Ok { response } else { None },
            outcome,
            latency_ms: latency.as_millis() as u64,
        }
    }
}

#[derive(Debug)]
struct Bucket {
    rps: f64,
    tokens: f64,
    last: Instant,
}

impl Bucket {
    fn new(rps: f64) -> Self {
        Bucket {
            rps,
            tokens: rps.max(1.0),
            last: Instant::now(),
        }
    }

    /// Takes one token, possibly on credit; returns how long to wait for it.
    fn reserve(&mut self) -> Duration {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        self.tokens = (self.tokens + elapsed * self.rps).min(self.rps.max(1.0));
        self.tokens -= 1.0;
        if self.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-self.tokens / self.rps)
        }
    }
}

enum Attempt {
    Done(ProbeOutcome, Option<String>),
    Retryable,
}

/// Sends probes. Holds the shared HTTP client and per-adapter rate limiters;
/// adapters themselves carry no state.
#[derive(Debug)]
pub struct Prober {
    client: reqwest::Client,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl Default for Prober {
    fn default() -> Self {
        Self::new()
    }
}

impl Prober {
    pub fn new() -> Self {
        // Connections are not pooled so every attempt is a fresh, observable
        // request and the client never replays one behind our back.
        let client = reqwest::Client::builder()
            .pool_max_idle_per_host(0)
            .retry(reqwest::retry::never())
            .build()
            .unwrap_or_default();
        Prober {
            client,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub async fn probe(&self, adapter: &AdapterDescriptor, indicator_id: &str, prompt: &str) -> Result<ProbeResult> {
        if prompt.trim().is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let violations = validate_adapter(adapter);
        if !violations.is_empty() {
            return Err(Error::ConfigInvalid(violations));
        }
        match &adapter.config {
            AdapterConfig::Manual => Ok(ProbeResult::new(
                indicator_id,
                prompt,
                ProbeOutcome::Refused,
                None,
                Duration::ZERO,
            )),
            AdapterConfig::Mock(mock) => {
                let hit = mock.table.get(prompt).or(mock.default.as_ref()).cloned();
                let outcome = if hit.is_some() { ProbeOutcome::Ok } else { ProbeOutcome::Refused };
                Ok(ProbeResult::new(indicator_id, prompt, outcome, hit, Duration::ZERO))
            }
            AdapterConfig::Http(http) => self.probe_http(&adapter.id, http, indicator_id, prompt).await,
        }
    }

    async fn throttle(&self, id: &str, rps: Option<f64>) {
        let Some(rps) = rps else { return };
        let wait = {
            let mut buckets = self.buckets.lock().unwrap_or_else(|p| p.into_inner());
            let bucket = buckets.entry(id.to_string()).or_insert_with(|| Bucket::new(rps));
            if bucket.rps != rps {
                *bucket = Bucket::new(rps);
            }
            bucket.reserve()
        };
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }

    async fn probe_http(&self, id: &str, http: &HttpConfig, indicator_id: &str, prompt: &str) -> Result<ProbeResult> {
        let env = |n: &str| std::env::var(n).ok();
        let url = render(&http.url, prompt, false, env).map_err(env_missing("url"))?;
        let body = render(&http.body, prompt, true, env).map_err(env_missing("body"))?;
        let mut headers = reqwest::header::HeaderMap::new();
        for (name, template) in &http.headers {
            let value = render(template, prompt, false, env).map_err(env_missing("headers"))?;
            let name = reqwest::header::HeaderName::from_bytes(name.as_bytes())
                .map_err(|e| Error::BadRequest(e.to_string()))?;
            let value = reqwest::header::HeaderValue::from_str(&value).map_err(|_| {
                Error::ConfigInvalid(vec![AdapterViolation::new(
                    AdapterViolationCode::HeaderInvalid,
                    format!("headers.{name}"),
                    "header value contains characters not allowed in HTTP headers",
                )])
            })?;
            headers.insert(name, value);
        }
        if !body.is_empty() && !headers.contains_key(reqwest::header::CONTENT_TYPE) {
            let trimmed = body.trim_start();
            if trimmed.starts_with('{') || trimmed.starts_with('[') {
                headers.insert(
                    reqwest::header::CONTENT_TYPE,
                    reqwest::header::HeaderValue::from_static("application/json"),
                );
            }
        }
        let method = reqwest::Method::from_bytes(http.method.as_bytes()).map_err(|e| Error::BadRequest(e.to_string()))?;
        let timeout = Duration::from_millis(http.timeout_ms as u64);
        let base = http.backoff_base_ms.unwrap_or(DEFAULT_BACKOFF_BASE_MS as i64) as u64;

        let mut latency = Duration::ZERO;
        let attempts = http.retries as u64 + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let cap = base.saturating_mul(BACKOFF_FACTOR.saturating_pow(attempt as u32 - 1));
                let jitter = rand::rng().random_range(0..=cap);
                tokio::time::sleep(Duration::from_millis(jitter)).await;
            }
            self.throttle(id, http.rate_limit_rps).await;
            let mut request = self.client.request(method.clone(), &url).headers(headers.clone());
            if !body.is_empty() {
                request = request.body(body.clone());
            }
            let started = Instant::now();
            let outcome = tokio::time::timeout(timeout, self.send(request, timeout, &http.response_path)).await;
            latency += started.elapsed();
            match outcome {
                Err(_) => return Ok(ProbeResult::new(indicator_id, prompt, ProbeOutcome::Timeout, None, latency)),
                Ok(Attempt::Done(o, response)) => {
                    return Ok(ProbeResult::new(indicator_id, prompt, o, response, latency))
                }
                Ok(Attempt::Retryable) => {}
            }
        }
        Ok(ProbeResult::new(
            indicator_id,
            prompt,
            ProbeOutcome::TransportError,
            None,
            latency,
        ))
    }

    async fn send(&self, request: reqwest::RequestBuilder, timeout: Duration, path: &str) -> Attempt {
        let response = match request.timeout(timeout).send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Done(ProbeOutcome::Timeout, None),
            Err(_) => return Attempt::Retryable,
        };
        let status = response.status();
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Done(ProbeOutcome::Timeout, None),
            Err(_) => return Attempt::Retryable,
        };
        // A complete HTTP response ends the probe whatever its status.
        if !status.is_success() {
            return Attempt::Done(ProbeOutcome::TransportError, None);
        }
        match extract_response(&text, path) {
            Some(r) => Attempt::Done(ProbeOutcome::Ok, Some(r)),
            None => Attempt::Done(ProbeOutcome::TransportError, None),
        }
    }
}
