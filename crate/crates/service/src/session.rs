//! Editing sessions and their file-per-session store.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use pni_core::instruction::MultimodalInstruction;
use pni_core::layout::Layout;
use pni_core::validator::ValidationReport;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use uuid::Uuid;

use crate::engine::{EditOutcome, Engine};
use crate::error::ServiceError;

/// Layouts are stored as their canonical text.
mod canonical {
    use pni_core::layout::Layout;
    use pni_core::{parse_layout, serialize_layout};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(layout: &Layout, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&serialize_layout(layout))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Layout, D::Error> {
        let text = String::deserialize(d)?;
        parse_layout(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub instruction: MultimodalInstruction,
    pub engine: Engine,
    #[serde(with = "canonical")]
    pub before: Layout,
    #[serde(with = "canonical")]
    pub after: Layout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_text: Option<String>,
    pub validation: ValidationReport,
    pub duration_ms: u64,
    /// False for language-model results that failed validation; those are
    /// kept for inspection but never became the current layout.
    pub applied: bool,
}

impl EditRecord {
    pub fn from_outcome(before: &Layout, instruction: &MultimodalInstruction, outcome: &EditOutcome) -> Self {
        Self {
            instruction: instruction.clone(),
            engine: outcome.engine,
            before: before.clone(),
            after: outcome.after.clone(),
            completion_text: outcome.completion_text.clone(),
            validation: outcome.validation.clone(),
            duration_ms: outcome.duration_ms,
            applied: outcome.applies(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: Uuid,
    #[serde(with = "canonical")]
    pub initial: Layout,
    #[serde(with = "canonical")]
    pub current: Layout,
    pub history: Vec<EditRecord>,
    #[serde(default)]
    pub archived: Vec<EditRecord>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Session {
    pub fn new(initial: Layout) -> Self {
        let now = Utc::now();
        Self {
            session_id: Uuid::new_v4(),
            current: initial.clone(),
            initial,
            history: Vec::new(),
            archived: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn record(&mut self, record: EditRecord) {
        if record.applied {
            self.current = record.after.clone();
        }
        self.history.push(record);
        self.updated_at = Utc::now();
    }

    /// Pops records back to and including the last applied one, archives
    /// them, and restores that record's `before`.
    pub fn undo(&mut self) -> Result<&Layout, ServiceError> {
        let idx = self.history.iter().rposition(|r| r.applied).ok_or(ServiceError::NothingToUndo)?;
        let popped: Vec<EditRecord> = self.history.drain(idx..).collect();
        self.current = popped[0].before.clone();
        self.archived.extend(popped);
        self.updated_at = Utc::now();
        Ok(&self.current)
    }

    /// `current` must equal the last applied record's `after` (or `initial`).
    pub fn is_consistent(&self) -> bool {
        let expected = self.history.iter().rev().find(|r| r.applied).map_or(&self.initial, |r| &r.after);
        *expected == self.current
    }
}

pub type SessionHandle = Arc<Mutex<Session>>;

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<Uuid, SessionHandle>>,
}

impl SessionStore {
    /// Opens `dir`, creating it if needed, and loads every readable session.
    /// Unreadable files are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| ServiceError::Storage(format!("cannot create data dir {}: {e}", dir.display())))?;
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| ServiceError::Storage(format!("cannot list data dir {}: {e}", dir.display())))?;
        let mut sessions = HashMap::new();
        for entry in entries.flatten() {
            let path = entry.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => match load_session(&path) {
                    Ok(s) => {
                        sessions.insert(s.session_id, Arc::new(Mutex::new(s)));
                    }
                    Err(e) => tracing::warn!(file = %path.display(), error = %e, "skipping unreadable session file"),
                },
                Some("tmp") => {
                    let _ = std::fs::remove_file(&path);
                }
                _ => {}
            }
        }
        tracing::info!(count = sessions.len(), dir = %dir.display(), "sessions loaded");
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub async fn len(&self) -> usize {
        self.sessions.read().await.len()
    }

    pub async fn is_empty(&self) -> bool {
        self.len().await == 0
    }

    pub async fn insert(&self, session: Session) -> Result<SessionHandle, ServiceError> {
        self.persist(&session).await?;
        let id = session.session_id;
        let handle = Arc::new(Mutex::new(session));
        self.sessions.write().await.insert(id, handle.clone());
        Ok(handle)
    }

    pub async fn get(&self, id: &str) -> Result<SessionHandle, ServiceError> {
        let unknown = || ServiceError::UnknownSession(id.to_string());
        let uuid = Uuid::parse_str(id).map_err(|_| unknown())?;
        self.sessions.read().await.get(&uuid).cloned().ok_or_else(unknown)
    }

    /// Writes the session atomically: temp file, fsync, rename, fsync dir.
    pub async fn persist(&self, session: &Session) -> Result<(), ServiceError> {
        let text = serde_json::to_vec_pretty(session)
            .map_err(|e| ServiceError::Storage(format!("cannot encode session: {e}")))?;
        let dir = self.dir.clone();
        let id = session.session_id;
        tokio::task::spawn_blocking(move || write_atomic(&dir, &format!("{id}.json"), &text))
            .await
            .map_err(|e| ServiceError::Storage(format!("writer task failed: {e}")))?
            .map_err(|e| ServiceError::Storage(format!("cannot write session {id}: {e}")))
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, dir.join(name))?;
    if let Ok(d) = std::fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn load_session(path: &Path) -> Result<Session, ServiceError> {
    let bytes = std::fs::read(path).map_err(|e| ServiceError::Storage(e.to_string()))?;
    let session: Session = serde_json::from_slice(&bytes).map_err(|e| ServiceError::Storage(e.to_string()))?;
    if !session.is_consistent() {
        return Err(ServiceError::Storage("current layout disagrees with history".into()));
    }
    Ok(session)
}

/// Summary row for `GET /v1/sessions/{id}`.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub index: usize,
    pub engine: Engine,
    pub instruction: String,
    pub ok: bool,
    pub applied: bool,
    pub failed_rules: Vec<String>,
    pub duration_ms: u64,
}

impl HistoryEntry {
    pub fn summarize(history: &[EditRecord]) -> Vec<HistoryEntry> {
        history
            .iter()
            .enumerate()
            .map(|(index, r)| HistoryEntry {
                index,
                engine: r.engine,
                instruction: pni_core::serialize_instruction(&r.instruction).unwrap_or_else(|_| r.instruction.plain_text()),
                ok: r.validation.ok,
                applied: r.applied,
                failed_rules: r.validation.failed_rules().into_iter().map(str::to_string).collect(),
                duration_ms: r.duration_ms,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pni_core::validator::{validate_edit, ValidationPolicy};
    use pni_core::{parse_instruction_text, BoundingBox, Canvas};

    fn layout() -> Layout {
        Layout::new(Canvas::default(), "a \"quoted\" park").with_object(0, "a dog", BoundingBox::new(10, 10, 50, 50))
    }

    fn record(before: &Layout, applied: bool, caption: &str) -> EditRecord {
        let mut after = before.clone();
        after.objects[0].caption = caption.into();
        let instruction = parse_instruction_text("recaption {x: 10, y: 10, width: 50, height: 50} to a cat").unwrap();
        EditRecord {
            validation: validate_edit(before, &after, &instruction, &ValidationPolicy::default()),
            instruction,
            engine: if applied { Engine::Oracle } else { Engine::Llm },
            before: before.clone(),
            after,
            completion_text: None,
            duration_ms: 1,
            applied,
        }
    }

    #[test]
    fn undo_semantics() {
        let mut s = Session::new(layout());
        assert!(matches!(s.undo(), Err(ServiceError::NothingToUndo)));
        let r1 = record(&s.current, true, "a cat");
        s.record(r1);
        let r2 = record(&s.current, false, "a bird");
        s.record(r2);
        assert_eq!(s.current.objects[0].caption, "a cat");
        assert!(s.is_consistent());
        assert_eq!(s.undo().unwrap(), &layout());
        assert!(s.history.is_empty());
        assert_eq!(s.archived.len(), 2);
        assert!(matches!(s.undo(), Err(ServiceError::NothingToUndo)));
    }

    #[tokio::test]
    async fn persist_reload_and_skip_corrupt() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("nested/data");
        let store = SessionStore::open(&dir).unwrap();
        let mut s = Session::new(layout());
        let r = record(&s.current, true, "a cat");
        s.record(r);
        store.insert(s.clone()).await.unwrap();
        store.insert(Session::new(layout())).await.unwrap();
        std::fs::write(dir.join("garbage.json"), "{\"session_id\": 1").unwrap();
        std::fs::write(dir.join(".stale.json.tmp"), "x").unwrap();

        let reopened = SessionStore::open(&dir).unwrap();
        assert_eq!(reopened.len().await, 2);
        let loaded = reopened.get(&s.session_id.to_string()).await.unwrap();
        assert_eq!(*loaded.lock().await, s);
        assert!(!dir.join(".stale.json.tmp").exists());
        assert!(matches!(reopened.get("nope").await, Err(ServiceError::UnknownSession(_))));
    }

    #[test]
    fn file_embeds_canonical_layout_text() {
        let s = Session::new(layout());
        let value = serde_json::to_value(&s).unwrap();
        assert_eq!(value["current"].as_str().unwrap(), pni_core::serialize_layout(&layout()));
    }
}
