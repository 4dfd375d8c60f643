//! A data directory and the operations the API and the local CLI share.
//!
//! Layout:
//!
//! ```text
//! <root>/.lock            advisory writer lock
//! <root>/scales/<id>.scale
//! <root>/adapters.json
//! <root>/products.json
//! <root>/sessions/<uuid>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::adapters::{builtin_adapters, validate_adapter, AdapterDescriptor, ProbeResult, Prober};
use crate::dsl::{parse, serialize_scale};
use crate::error::{Error, Result};
use crate::reference::Dataset;
use crate::report::{build_ranking, build_value_report, RankingReport, ValueInput, ValueReport};
use crate::scale::{slugify, Scale};
use crate::scoring::{compute_weighted_iq, CompletionPolicy, PositivePrice, QuotientKind, QuotientResult};
use crate::session::{Session, SessionFilter, SessionState, SessionStore};
use crate::subject::SubjectDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    ReadWrite,
    ReadOnly,
}

/// A priced product, matched to sessions by subject name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub name: String,
    pub price: f64,
    pub currency: String,
}

impl Product {
    pub fn positive_price(&self) -> Result<PositivePrice> {
        PositivePrice::new(self.price, self.currency.clone())
    }
}

/// Returned by score recording: the updated session plus the running IQ
/// over the indicators scored so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    pub session: Session,
    pub preview: QuotientResult,
}

/// The running IQ shown while a session is being scored.
pub fn running_preview(scale: &Scale, session: &Session) -> Result<QuotientResult> {
    let mut preview = compute_weighted_iq(scale, &session.score_sheet(), CompletionPolicy::RenormalizeOverScored)?;
    preview.session_id = Some(session.id.clone());
    Ok(preview)
}

/// Exclusive advisory lock on a data directory, released on drop.
#[derive(Debug)]
pub struct DataDirLock {
    _file: fs::File,
}

impl DataDirLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(".lock");
        let file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::DataDirUnwritable {
                path: root.display().to_string(),
                reason: e.to_string(),
            })?;
        match file.try_lock() {
            Ok(()) => Ok(DataDirLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(Error::Locked(root.display().to_string())),
            Err(fs::TryLockError::Error(e)) => Err(Error::io(&path, e)),
        }
    }
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    mode: AccessMode,
    sessions: SessionStore,
    prober: Prober,
    registry: Mutex<()>,
    _lock: Option<DataDirLock>,
}

fn valid_scale_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

impl Workspace {
    /// Opens `root`. Read-write mode creates the layout and takes the writer
    /// lock; read-only mode touches nothing.
    pub fn open(root: impl Into<PathBuf>, mode: AccessMode) -> Result<Self> {
        let root = root.into();
        let lock = match mode {
            AccessMode::ReadWrite => {
                for dir in [root.clone(), root.join("scales"), root.join("sessions")] {
                    fs::create_dir_all(&dir).map_err(|e| Error::DataDirUnwritable {
                        path: dir.display().to_string(),
                        reason: e.to_string(),
                    })?;
                }
                Some(DataDirLock::acquire(&root)?)
            }
            AccessMode::ReadOnly => None,
        };
        let sessions = match mode {
            AccessMode::ReadWrite => SessionStore::open(root.join("sessions"))?,
            AccessMode::ReadOnly => SessionStore::at(root.join("sessions")),
        };
        Ok(Workspace {
            root,
            mode,
            sessions,
            prober: Prober::new(),
            registry: Mutex::new(()),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    pub fn session_store(&self) -> &SessionStore {
        &self.sessions
    }

    fn writable(&self) -> Result<()> {
        match self.mode {
            AccessMode::ReadWrite => Ok(()),
            AccessMode::ReadOnly => Err(Error::ReadOnly),
        }
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Vec<T>> {
        let path = self.root.join(name);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::Internal(format!("{} is malformed: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, items: &[T]) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(items).map_err(|e| Error::Internal(e.to_string()))?;
        bytes.push(b'\n');
        crate::fsutil::write_atomic(&self.root.join(name), &bytes)
    }

    // scales

    /// Bundled scales followed by registered ones, ordered by id.
    pub fn scales(&self) -> Result<Vec<Scale>> {
        let mut out = crate::bundled::all();
        let dir = self.root.join("scales");
        let mut files = Vec::new();
        match fs::read_dir(&dir) {
            Ok(entries) => {
                for entry in entries {
                    let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                    if path.extension().is_some_and(|e| e == "scale") {
                        files.push(path);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&dir, e)),
        }
        files.sort();
        for path in files {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if out.iter().any(|s| s.id == id) {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let parsed = parse(&text);
            let mut scale = match parsed.scale {
                Some(s) if !parsed.diagnostics.iter().any(|d| d.is_error()) => s,
                _ => return Err(Error::ParseFailed(parsed.diagnostics)),
            };
            scale.id = id;
            out.push(scale);
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn scale(&self, id: &str) -> Result<Scale> {
        self.scales()?
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::UnknownScale(id.to_string()))
    }

    /// Registers DSL text under `id` (default: the slug of its name).
    /// Re-registering an identical scale returns it unchanged.
    pub fn add_scale(&self, text: &str, id: Option<&str>) -> Result<Scale> {
        self.writable()?;
        let parsed = parse(text);
        let mut scale = match parsed.scale {
            Some(s) if !parsed.diagnostics.iter().any(|d| d.is_error()) => s,
            _ => return Err(Error::ParseFailed(parsed.diagnostics)),
        };
        scale.id = id.map(str::to_string).unwrap_or_else(|| slugify(&scale.name));
        if !valid_scale_id(&scale.id) {
            return Err(Error::BadRequest(format!(
                "scale id {:?} must be nonempty lowercase letters, digits and '-'",
                scale.id
            )));
        }
        let _guard = self.registry.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = self.scales()?.into_iter().find(|s| s.id == scale.id) {
            return if existing == scale {
                Ok(existing)
            } else {
                Err(Error::ScaleExists(scale.id))
            };
        }
        let path = self.root.join("scales").join(format!("{}.scale", scale.id));
        crate::fsutil::write_atomic(&path, serialize_scale(&scale).as_bytes())?;
        Ok(scale)
    }

    // adapters

    /// Built-in adapters overlaid with `adapters.json`, ordered by id.
    pub fn adapters(&self) -> Result<Vec<AdapterDescriptor>> {
        let mut out = builtin_adapters();
        for a in self.read_json::<AdapterDescriptor>("adapters.json")? {
            out.retain(|b| b.id != a.id);
            out.push(a);
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn adapter(&self, id: &str) -> Result<AdapterDescriptor> {
        self.adapters()?
            .into_iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::UnknownAdapter(id.to_string()))
    }

    /// Validates and upserts a descriptor. Never contacts the endpoint.
    pub fn add_adapter(&self, adapter: AdapterDescriptor) -> Result<AdapterDescriptor> {
        self.writable()?;
        let violations = validate_adapter(&adapter);
        if !violations.is_empty() {
            return Err(Error::ConfigInvalid(violations));
        }
        let _guard = self.registry.lock().unwrap_or_else(|p| p.into_inner());
        let mut stored = self.read_json::<AdapterDescriptor>("adapters.json")?;
        stored.retain(|a| a.id != adapter.id);
        stored.push(adapter.clone());
        stored.sort_by(|a, b| a.id.cmp(&b.id));
        self.write_json("adapters.json", &stored)?;
        Ok(adapter)
    }

    // products

    pub fn products(&self) -> Result<Vec<Product>> {
        self.read_json("products.json")
    }

    /// Upserts a product by name.
    pub fn add_product(&self, product: Product) -> Result<Product> {
        self.writable()?;
        if product.name.trim().is_empty() {
            return Err(Error::BadRequest("product name must be nonempty".into()));
        }
        product.positive_price()?;
        let _guard = self.registry.lock().unwrap_or_else(|p| p.into_inner());
        let mut stored = self.products()?;
        stored.retain(|p| p.name != product.name);
        stored.push(product.clone());
        stored.sort_by(|a, b| a.name.cmp(&b.name));
        self.write_json("products.json", &stored)?;
        Ok(product)
    }

    // sessions

    pub fn create_session(&self, scale_id: &str, subject: SubjectDescriptor, adapter_id: &str) -> Result<Session> {
        self.writable()?;
        let scale = self.scale(scale_id)?;
        self.adapter(adapter_id)?;
        self.sessions.create(&scale, subject, adapter_id)
    }

    pub fn session(&self, id: &str) -> Result<Session> {
        self.sessions.load(id)
    }

    pub fn sessions(&self, filter: &SessionFilter) -> Result<Vec<Session>> {
        self.sessions.list(filter)
    }

    pub fn record_score(&self, id: &str, indicator_id: &str, score: f64, note: Option<&str>) -> Result<ScoreOutcome> {
        self.writable()?;
        let scale = self.scale(&self.sessions.load(id)?.scale_id)?;
        let session = self.sessions.record_score(id, &scale, indicator_id, score, note)?;
        let preview = running_preview(&scale, &session)?;
        Ok(ScoreOutcome { session, preview })
    }

    /// Sends `prompt` through the session's adapter and records the exchange.
    pub async fn probe(&self, id: &str, indicator_id: &str, prompt: &str) -> Result<ProbeResult> {
        self.writable()?;
        let session = self.sessions.load(id)?;
        if session.state != SessionState::Open {
            return Err(Error::SessionNotOpen {
                id: session.id,
                state: session.state.to_string(),
            });
        }
        let scale = self.scale(&session.scale_id)?;
        if scale.indicator(indicator_id).is_none() {
            return Err(Error::UnknownIndicator(indicator_id.to_string()));
        }
        let adapter = self.adapter(&session.adapter_id)?;
        let result = self.prober.probe(&adapter, indicator_id, prompt).await?;
        let payload = serde_json::to_string(&result).map_err(|e| Error::Internal(e.to_string()))?;
        self.sessions.record_probe(id, indicator_id, prompt, &payload)?;
        Ok(result)
    }

    pub fn add_note(&self, id: &str, indicator_id: Option<&str>, note: &str) -> Result<Session> {
        self.writable()?;
        self.sessions.add_note(id, indicator_id, note)
    }

    pub fn complete(&self, id: &str, policy: CompletionPolicy) -> Result<QuotientResult> {
        self.writable()?;
        let scale = self.scale(&self.sessions.load(id)?.scale_id)?;
        let session = self.sessions.complete(id, &scale, policy)?;
        session
            .result
            .ok_or_else(|| Error::Internal("completed session has no result".into()))
    }

    pub fn abandon(&self, id: &str) -> Result<Session> {
        self.writable()?;
        self.sessions.abandon(id)
    }

    // reports

    /// Ranks every completed session (of `scale_id` when given).
    pub fn ranking(&self, scale_id: Option<&str>, overlay: Option<Dataset>) -> Result<RankingReport> {
        if let Some(id) = scale_id {
            self.scale(id)?;
        }
        let filter = SessionFilter {
            state: Some(SessionState::Complete),
            scale_id: scale_id.map(str::to_string),
            ..Default::default()
        };
        build_ranking(&self.sessions.list(&filter)?, scale_id, overlay)
    }

    /// Pairs each product (of `currency` when given) with the latest
    /// completed Service IQ session whose subject carries the product's
    /// name. Products without such a session are left out.
    pub fn value_report(&self, currency: Option<&str>) -> Result<ValueReport> {
        let completed = self.sessions.list(&SessionFilter {
            state: Some(SessionState::Complete),
            ..Default::default()
        })?;
        let mut inputs = Vec::new();
        for product in self.products()? {
            if currency.is_some_and(|c| c != product.currency) {
                continue;
            }
            let latest = completed
                .iter()
                .filter(|s| s.subject.name == product.name)
                .filter_map(|s| s.result.as_ref().map(|r| (s, r)))
                .filter(|(_, r)| r.kind == QuotientKind::Service)
                .max_by(|a, b| a.0.updated_at.cmp(&b.0.updated_at).then_with(|| a.0.id.cmp(&b.0.id)));
            if let Some((_, result)) = latest {
                inputs.push(ValueInput {
                    subject: product.name.clone(),
                    result: result.clone(),
                    price: product.positive_price()?,
                });
            }
        }
        let mut report = build_value_report(&inputs)?;
        if report.currency.is_none() {
            report.currency = currency.map(str::to_string);
        }
        Ok(report)
    }
}
