//! Replay of state-changing requests carrying an `Idempotency-Key` header.
//!
//! The first request with a key runs and its response is cached together
//! with a digest of method, path and body. A retry with the same key and
//! digest gets the cached response without running the handler again; the
//! same key with a different request is refused. Requests sharing a key are
//! serialized so a retry racing the original waits for its result.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::AppState;

pub const HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";
const MAX_BODY: usize = 4 * 1024 * 1024;
const CAPACITY: usize = 10_000;

#[derive(Clone)]
struct Cached {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

struct Entry {
    fingerprint: String,
    slot: Arc<tokio::sync::Mutex<Option<Cached>>>,
}

#[derive(Default)]
pub struct IdempotencyCache {
    inner: Mutex<(HashMap<String, Entry>, VecDeque<String>)>,
}

impl IdempotencyCache {
    fn slot(&self, key: &str, fingerprint: &str) -> Option<Arc<tokio::sync::Mutex<Option<Cached>>>> {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let (map, order) = &mut *guard;
        if let Some(e) = map.get(key) {
            return (e.fingerprint == fingerprint).then(|| e.slot.clone());
        }
        if order.len() >= CAPACITY {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
        let slot = Arc::new(tokio::sync::Mutex::new(None));
        map.insert(
            key.to_string(),
            Entry {
                fingerprint: fingerprint.to_string(),
                slot: slot.clone(),
            },
        );
        order.push_back(key.to_string());
        Some(slot)
    }
}

fn fingerprint(method: &Method, uri: &str, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(method.as_str().as_bytes());
    h.update([0]);
    h.update(uri.as_bytes());
    h.update([0]);
    h.update(body);
    hex::encode(h.finalize())
}

pub async fn middleware(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if request.method() != Method::POST {
        return next.run(request).await;
    }
    let Some(key) = request
        .headers()
        .get(HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
    else {
        return next.run(request).await;
    };
    let (parts, body) = request.into_parts();
    let Ok(bytes) = to_bytes(body, MAX_BODY).await else {
        return ApiError::bad_request("request body too large or unreadable").into_response();
    };
    let uri = parts.uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    let fp = fingerprint(&parts.method, uri, &bytes);
    let Some(slot) = state.idempotency.slot(&key, &fp) else {
        return ApiError::from(aiq_core::Error::IdempotencyConflict(key)).into_response();
    };
    let mut cached = slot.lock().await;
    if let Some(c) = cached.as_ref() {
        let mut response = (c.status, c.headers.clone(), c.body.clone()).into_response();
        response
            .headers_mut()
            .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        return response;
    }
    let response = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let (parts, body) = response.into_parts();
    let Ok(bytes) = to_bytes(body, usize::MAX).await else {
        return StatusCode::INTERNAL_SERVER_ERROR.into_response();
    };
    // server faults are not cached so a retry can succeed
    if !parts.status.is_server_error() {
        *cached = Some(Cached {
            status: parts.status,
            headers: parts.headers.clone(),
            body: bytes.clone(),
        });
    }
    Response::from_parts(parts, Body::from(bytes))
}
