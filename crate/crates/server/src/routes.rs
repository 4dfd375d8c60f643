use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use aiq_core::adapters::AdapterDescriptor;
use aiq_core::reference::{reference_dataset, Dataset};
use aiq_core::report::{export_report, ExportFormat, Report};
use aiq_core::scoring::CompletionPolicy;
use aiq_core::session::{SessionFilter, SessionState};
use aiq_core::subject::{SubjectDescriptor, SubjectKind};
use aiq_core::workspace::{Product, Workspace};
use aiq_core::Error;

use crate::error::ApiError;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;
type Params = Query<HashMap<String, String>>;

pub fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/health", get(health))
        .route("/scales", get(list_scales).post(add_scale))
        .route("/scales/{id}", get(get_scale))
        .route("/adapters", get(list_adapters).post(add_adapter))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/probe", post(probe))
        .route("/sessions/{id}/scores", post(score))
        .route("/sessions/{id}/notes", post(note))
        .route("/sessions/{id}/complete", post(complete))
        .route("/sessions/{id}/abandon", post(abandon))
        .route("/products", get(list_products).post(add_product))
        .route("/reports/ranking", get(ranking))
        .route("/reports/value", get(value))
        .route("/reference/{dataset}", get(reference))
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn param<T: FromStr<Err = Error>>(params: &HashMap<String, String>, name: &str) -> ApiResult<Option<T>> {
    match params.get(name).filter(|v| !v.is_empty()) {
        Some(v) => Ok(Some(v.parse()?)),
        None => Ok(None),
    }
}

fn number(params: &HashMap<String, String>, name: &str) -> ApiResult<Option<usize>> {
    params
        .get(name)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_request(format!("{name} must be a nonnegative integer")))
        })
        .transpose()
}

/// Runs blocking workspace I/O off the async executor.
async fn run<T, F>(state: &Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Workspace) -> aiq_core::Result<T> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state.workspace))
        .await
        .map_err(|e| ApiError::from(Error::Internal(e.to_string())))?
        .map_err(ApiError::from)
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

#[derive(Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub read_only: bool,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        read_only: state.workspace.mode() == aiq_core::workspace::AccessMode::ReadOnly,
    })
}

async fn list_scales(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    Ok(Json(run(&state, |ws| ws.scales()).await?).into_response())
}

async fn get_scale(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(run(&state, move |ws| ws.scale(&id)).await?).into_response())
}

/// Body is DSL text; `?id=` overrides the id derived from the scale name.
async fn add_scale(State(state): State<Arc<AppState>>, Query(params): Params, bytes: Bytes) -> ApiResult<Response> {
    let text = String::from_utf8(bytes.to_vec()).map_err(|_| ApiError::bad_request("body must be UTF-8 text"))?;
    let id = params.get("id").cloned();
    Ok(created(run(&state, move |ws| ws.add_scale(&text, id.as_deref())).await?))
}

async fn list_adapters(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    Ok(Json(run(&state, |ws| ws.adapters()).await?).into_response())
}

async fn add_adapter(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<Response> {
    let adapter: AdapterDescriptor = body(&bytes)?;
    Ok(created(run(&state, move |ws| ws.add_adapter(adapter)).await?))
}

#[derive(Serialize, Deserialize)]
pub struct NewSession {
    pub scale_id: String,
    pub subject: SubjectDescriptor,
    pub adapter_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<Response> {
    let req: NewSession = body(&bytes)?;
    Ok(created(
        run(&state, move |ws| ws.create_session(&req.scale_id, req.subject, &req.adapter_id)).await?,
    ))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(run(&state, move |ws| ws.session(&id)).await?).into_response())
}

async fn list_sessions(State(state): State<Arc<AppState>>, Query(params): Params) -> ApiResult<Response> {
    let filter = SessionFilter {
        state: param::<SessionState>(&params, "state")?,
        subject_kind: param::<SubjectKind>(&params, "subject_kind")?,
        scale_id: params.get("scale_id").filter(|v| !v.is_empty()).cloned(),
        subject: params.get("subject").filter(|v| !v.is_empty()).cloned(),
        offset: number(&params, "offset")?,
        limit: number(&params, "limit")?,
    };
    Ok(Json(run(&state, move |ws| ws.sessions(&filter)).await?).into_response())
}

#[derive(Serialize, Deserialize)]
pub struct ProbeRequest {
    pub indicator_id: String,
    pub prompt: String,
}

async fn probe(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: ProbeRequest = body(&bytes)?;
    let result = state.workspace.probe(&id, &req.indicator_id, &req.prompt).await?;
    Ok(Json(result).into_response())
}

#[derive(Serialize, Deserialize)]
pub struct ScoreRequest {
    pub indicator_id: String,
    pub score: f64,
    #[serde(default)]
    pub note: Option<String>,
}

async fn score(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: ScoreRequest = body(&bytes)?;
    Ok(Json(run(&state, move |ws| ws.record_score(&id, &req.indicator_id, req.score, req.note.as_deref())).await?)
        .into_response())
}

#[derive(Serialize, Deserialize)]
pub struct NoteRequest {
    #[serde(default)]
    pub indicator_id: Option<String>,
    pub note: String,
}

async fn note(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: NoteRequest = body(&bytes)?;
    Ok(Json(run(&state, move |ws| ws.add_note(&id, req.indicator_id.as_deref(), &req.note)).await?).into_response())
}

#[derive(Serialize, Deserialize, Default)]
pub struct CompleteRequest {
    #[serde(default)]
    pub policy: CompletionPolicy,
}

async fn complete(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: CompleteRequest = if bytes.iter().all(u8::is_ascii_whitespace) {
        CompleteRequest::default()
    } else {
        body(&bytes)?
    };
    Ok(Json(run(&state, move |ws| ws.complete(&id, req.policy)).await?).into_response())
}

async fn abandon(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(run(&state, move |ws| ws.abandon(&id)).await?).into_response())
}

async fn list_products(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    Ok(Json(run(&state, |ws| ws.products()).await?).into_response())
}

async fn add_product(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<Response> {
    let product: Product = body(&bytes)?;
    Ok(created(run(&state, move |ws| ws.add_product(product)).await?))
}

fn exported(report: Report, format: Option<ExportFormat>) -> Response {
    let format = format.unwrap_or(ExportFormat::Json);
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    ([(header::CONTENT_TYPE, content_type)], export_report(&report, format)).into_response()
}

async fn ranking(State(state): State<Arc<AppState>>, Query(params): Params) -> ApiResult<Response> {
    let overlay = param::<Dataset>(&params, "overlay")?;
    let format = param::<ExportFormat>(&params, "format")?;
    let scale_id = params.get("scale_id").filter(|v| !v.is_empty()).cloned();
    let report = run(&state, move |ws| ws.ranking(scale_id.as_deref(), overlay)).await?;
    Ok(exported(Report::Ranking(report), format))
}

async fn value(State(state): State<Arc<AppState>>, Query(params): Params) -> ApiResult<Response> {
    let format = param::<ExportFormat>(&params, "format")?;
    let currency = params.get("currency").filter(|v| !v.is_empty()).cloned();
    let report = run(&state, move |ws| ws.value_report(currency.as_deref())).await?;
    Ok(exported(Report::Value(report), format))
}

async fn reference(Path(dataset): Path<String>) -> ApiResult<Response> {
    let dataset: Dataset = dataset.parse()?;
    Ok(Json(reference_dataset(dataset)).into_response())
}
