//! Event-sourced evaluation sessions persisted as one checksummed JSON
//! document per session.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scale::Scale;
use crate::scoring::{check_score, compute_weighted_iq, CompletionPolicy, QuotientResult, ScoreSheet};
use crate::subject::{SubjectDescriptor, SubjectKind};
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Complete,
    Abandoned,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Open => "open",
            SessionState::Complete => "complete",
            SessionState::Abandoned => "abandoned",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(SessionState::Open),
            "complete" => Ok(SessionState::Complete),
            "abandoned" => Ok(SessionState::Abandoned),
            other => Err(Error::BadRequest(format!("unknown session state {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PromptSent,
    ResponseReceived,
    ScoreAssigned,
    Note,
    StateChange,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PromptSent => "prompt_sent",
            EventKind::ResponseReceived => "response_received",
            EventKind::ScoreAssigned => "score_assigned",
            EventKind::Note => "note",
            EventKind::StateChange => "state_change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator_id: Option<String>,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(with = "crate::time")]
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub scale_id: String,
    pub subject: SubjectDescriptor,
    pub adapter_id: String,
    pub state: SessionState,
    #[serde(with = "crate::time")]
    pub created_at: Timestamp,
    #[serde(with = "crate::time")]
    pub updated_at: Timestamp,
    pub events: Vec<SessionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<QuotientResult>,
}

/// State reconstructed purely from a session's event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub state: SessionState,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    pub final_scores: BTreeMap<String, f64>,
}

impl Session {
    /// Latest score per indicator; earlier scores for the same indicator are
    /// superseded but stay in the log.
    pub fn final_scores(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            if let (EventKind::ScoreAssigned, Some(id), Some(score)) =
                (e.kind, &e.indicator_id, e.score)
            {
                out.insert(id.clone(), score);
            }
        }
        out
    }

    pub fn score_sheet(&self) -> ScoreSheet {
        ScoreSheet {
            scale_id: self.scale_id.clone(),
            entries: self.final_scores(),
        }
    }

    /// Fraction of `scale`'s indicators holding a final score.
    pub fn coverage(&self, scale: &Scale) -> f64 {
        let total = scale.indicator_count();
        if total == 0 {
            return 0.0;
        }
        let scores = self.final_scores();
        let scored = scale.indicators().filter(|i| scores.contains_key(&i.id)).count();
        scored as f64 / total as f64
    }

    fn corrupt(&self, seq: u64, reason: impl Into<String>) -> Error {
        Error::CorruptLog {
            id: self.id.clone(),
            seq,
            reason: reason.into(),
        }
    }

    /// Folds the event log, checking sequence contiguity and the state
    /// machine.
    pub fn replay(&self) -> Result<Replayed> {
        let first = self
            .events
            .first()
            .ok_or_else(|| self.corrupt(0, "event log is empty"))?;
        let mut state = None;
        let mut final_scores = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            let expected = i as u64 + 1;
            if e.seq != expected {
                return Err(self.corrupt(
                    e.seq,
                    format!("sequence gap: expected seq {expected}, found {}", e.seq),
                ));
            }
            if e.score.is_some() != (e.kind == EventKind::ScoreAssigned) {
                return Err(self.corrupt(e.seq, "score present on a non-score event or missing"));
            }
            match state {
                None => {
                    if e.kind != EventKind::StateChange || e.payload != "open" {
                        return Err(self.corrupt(e.seq, "log must start with state_change open"));
                    }
                    state = Some(SessionState::Open);
                    continue;
                }
                Some(SessionState::Open) => {}
                Some(s) => {
                    return Err(self.corrupt(e.seq, format!("event recorded after session became {s}")));
                }
            }
            match e.kind {
                EventKind::ScoreAssigned => {
                    let (Some(id), Some(score)) = (&e.indicator_id, e.score) else {
                        return Err(self.corrupt(e.seq, "score_assigned without indicator_id"));
                    };
                    if !(score.is_finite() && score >= 0.0) {
                        return Err(self.corrupt(e.seq, format!("invalid score {score}")));
                    }
                    final_scores.insert(id.clone(), score);
                }
                EventKind::StateChange => match e.payload.as_str() {
                    "complete" => state = Some(SessionState::Complete),
                    "abandoned" => state = Some(SessionState::Abandoned),
                    other => {
                        return Err(self.corrupt(e.seq, format!("invalid transition to {other:?}")))
                    }
                },
                _ => {}
            }
        }
        let last = self.events.last().unwrap_or(first);
        Ok(Replayed {
            state: state.unwrap_or(SessionState::Open),
            created_at: first.at,
            updated_at: last.at,
            final_scores,
        })
    }

    /// Checks that the stored snapshot fields agree with the replayed log.
    pub fn verify(&self) -> Result<Replayed> {
        let r = self.replay()?;
        let last_seq = self.events.len() as u64;
        if r.state != self.state {
            return Err(self.corrupt(
                last_seq,
                format!("snapshot state {} but log replays to {}", self.state, r.state),
            ));
        }
        if r.created_at != self.created_at || r.updated_at != self.updated_at {
            return Err(self.corrupt(last_seq, "snapshot timestamps disagree with the log"));
        }
        match (&self.result, self.state) {
            (Some(res), SessionState::Complete) => {
                if res.scale_id != self.scale_id || res.session_id.as_deref() != Some(&self.id) {
                    return Err(self.corrupt(last_seq, "result provenance does not match session"));
                }
            }
            (None, SessionState::Complete) => {
                return Err(self.corrupt(last_seq, "complete session without a result"))
            }
            (Some(_), _) => return Err(self.corrupt(last_seq, "result on a session that is not complete")),
            (None, _) => {}
        }
        Ok(r)
    }

    fn push(&mut self, kind: EventKind, indicator_id: Option<&str>, payload: &str, score: Option<f64>) {
        let mut at = time::now();
        if let Some(last) = self.events.last() {
            at = at.max(last.at);
        }
        self.events.push(SessionEvent {
            seq: self.events.len() as u64 + 1,
            kind,
            indicator_id: indicator_id.map(str::to_string),
            payload: payload.to_string(),
            score,
            at,
        });
        self.updated_at = at;
    }

    fn ensure_open(&self) -> Result<()> {
        if self.state != SessionState::Open {
            return Err(Error::SessionNotOpen {
                id: self.id.clone(),
                state: self.state.to_string(),
            });
        }
        Ok(())
    }

    fn ensure_scale(&self, scale: &Scale) -> Result<()> {
        if scale.id != self.scale_id {
            return Err(Error::ScaleMismatch {
                sheet: self.scale_id.clone(),
                scale: scale.id.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionFilter {
    #[serde(default)]
    pub state: Option<SessionState>,
    #[serde(default)]
    pub subject_kind: Option<SubjectKind>,
    #[serde(default)]
    pub scale_id: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub offset: Option<usize>,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl SessionFilter {
    pub fn matches(&self, s: &Session) -> bool {
        self.state.is_none_or(|st| s.state == st)
            && self.subject_kind.is_none_or(|k| s.subject.kind == k)
            && self.scale_id.as_deref().is_none_or(|id| s.scale_id == id)
            && self.subject.as_deref().is_none_or(|n| s.subject.name == n)
    }
}

#[derive(Serialize)]
struct Stored<'a> {
    #[serde(flatten)]
    session: &'a Session,
    checksum: &'a str,
}

/// Hex SHA-256 over the compact JSON of every field except `checksum`.
pub fn checksum(session: &Session) -> String {
    let bytes = serde_json::to_vec(session).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

fn encode(session: &Session) -> Vec<u8> {
    let sum = checksum(session);
    let mut out = serde_json::to_vec_pretty(&Stored {
        session,
        checksum: &sum,
    })
    .unwrap_or_default();
    out.push(b'\n');
    out
}

enum ReadError {
    Missing,
    Failed(Error),
}

/// Directory of `<uuid>.json` session documents.
///
/// Every write replaces the document atomically (temp file, fsync, rename)
/// after saving the previous consistent version as `<uuid>.json.prev`. A
/// document that fails to parse, checksum or replay falls back to that copy.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SessionStore {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    /// A store over `dir` that creates nothing; for read-only use.
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        SessionStore {
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn prev_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json.prev"))
    }

    pub fn create(&self, scale: &Scale, subject: SubjectDescriptor, adapter_id: &str) -> Result<Session> {
        if subject.name.trim().is_empty() {
            return Err(Error::BadRequest("subject name must be nonempty".into()));
        }
        let now = time::now();
        let mut session = Session {
            id: uuid::Uuid::new_v4().to_string(),
            scale_id: scale.id.clone(),
            subject,
            adapter_id: adapter_id.to_string(),
            state: SessionState::Open,
            created_at: now,
            updated_at: now,
            events: Vec::new(),
            result: None,
        };
        session.push(EventKind::StateChange, None, "open", None);
        session.created_at = session.updated_at;
        let lock = self.lock_for(&session.id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        crate::fsutil::write_atomic(&self.path_of(&session.id), &encode(&session))?;
        Ok(session)
    }

    pub fn load(&self, id: &str) -> Result<Session> {
        if uuid::Uuid::parse_str(id).is_err() {
            return Err(Error::NotFound(format!("session {id}")));
        }
        match self.read_verified(&self.path_of(id), id) {
            Ok(s) => Ok(s),
            Err(primary) => match self.read_verified(&self.prev_path(id), id) {
                Ok(s) => Ok(s),
                Err(_) => match primary {
                    ReadError::Missing => Err(Error::NotFound(format!("session {id}"))),
                    ReadError::Failed(e) => Err(e),
                },
            },
        }
    }

    fn read_verified(&self, path: &Path, id: &str) -> std::result::Result<Session, ReadError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ReadError::Missing),
            Err(e) => return Err(ReadError::Failed(Error::io(path, e))),
        };
        let corrupt = |seq, reason: String| {
            ReadError::Failed(Error::CorruptLog {
                id: id.to_string(),
                seq,
                reason,
            })
        };
        let mut value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(0, format!("unparseable document: {e}")))?;
        let stored_sum = value
            .as_object_mut()
            .and_then(|m| m.remove("checksum"))
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or_else(|| corrupt(0, "document has no checksum".into()))?;
        let session: Session =
            serde_json::from_value(value).map_err(|e| corrupt(0, format!("malformed session: {e}")))?;
        if checksum(&session) != stored_sum {
            return Err(corrupt(session.events.len() as u64, "checksum mismatch".into()));
        }
        if session.id != id {
            return Err(corrupt(0, format!("document belongs to session {}", session.id)));
        }
        session.verify().map_err(ReadError::Failed)?;
        Ok(session)
    }

    /// Sessions matching `filter`, ordered by creation time then id.
    pub fn list(&self, filter: &SessionFilter) -> Result<Vec<Session>> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.dir, e)),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if uuid::Uuid::parse_str(stem).is_ok() {
                ids.push(stem.to_string());
            }
        }
        let mut out = Vec::new();
        for id in ids {
            let s = self.load(&id)?;
            if filter.matches(&s) {
                out.push(s);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let offset = filter.offset.unwrap_or(0);
        let limit = filter.limit.unwrap_or(usize::MAX);
        Ok(out.into_iter().skip(offset).take(limit).collect())
    }

    /// Appends a `score_assigned` event; `note` becomes its payload.
    pub fn record_score(
        &self,
        id: &str,
        scale: &Scale,
        indicator_id: &str,
        score: f64,
        note: Option<&str>,
    ) -> Result<Session> {
        self.mutate(id, |s| {
            s.ensure_open()?;
            s.ensure_scale(scale)?;
            let ind = scale
                .indicator(indicator_id)
                .ok_or_else(|| Error::UnknownIndicator(indicator_id.to_string()))?;
            check_score(&ind.id, score, ind.max_score)?;
            s.push(EventKind::ScoreAssigned, Some(indicator_id), note.unwrap_or(""), Some(score));
            Ok(())
        })
    }

    /// Records one probe exchange as `prompt_sent` then `response_received`.
    pub fn record_probe(&self, id: &str, indicator_id: &str, prompt: &str, response: &str) -> Result<Session> {
        self.mutate(id, |s| {
            s.ensure_open()?;
            s.push(EventKind::PromptSent, Some(indicator_id), prompt, None);
            s.push(EventKind::ResponseReceived, Some(indicator_id), response, None);
            Ok(())
        })
    }

    pub fn add_note(&self, id: &str, indicator_id: Option<&str>, note: &str) -> Result<Session> {
        self.mutate(id, |s| {
            s.ensure_open()?;
            s.push(EventKind::Note, indicator_id, note, None);
            Ok(())
        })
    }

    /// Scores the final sheet and closes the session. On error the session
    /// stays open and nothing is written.
    pub fn complete(&self, id: &str, scale: &Scale, policy: CompletionPolicy) -> Result<Session> {
        self.mutate(id, |s| {
            s.ensure_open()?;
            s.ensure_scale(scale)?;
            let mut result = compute_weighted_iq(scale, &s.score_sheet(), policy)?;
            result.session_id = Some(s.id.clone());
            s.push(EventKind::StateChange, None, "complete", None);
            s.state = SessionState::Complete;
            s.result = Some(result);
            Ok(())
        })
    }

    pub fn abandon(&self, id: &str) -> Result<Session> {
        self.mutate(id, |s| {
            s.ensure_open()?;
            s.push(EventKind::StateChange, None, "abandoned", None);
            s.state = SessionState::Abandoned;
            Ok(())
        })
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    fn mutate(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<()>) -> Result<Session> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let before = self.load(id)?;
        let mut after = before.clone();
        f(&mut after)?;
        if after.events.len() < before.events.len() || after.events[..before.events.len()] != before.events[..] {
            return Err(Error::Internal("persisted events may only be appended".into()));
        }
        after.verify()?;
        crate::fsutil::write_atomic(&self.prev_path(id), &encode(&before))?;
        crate::fsutil::write_atomic(&self.path_of(id), &encode(&after))?;
        Ok(after)
    }
}
