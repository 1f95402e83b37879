//! Shared server state and snapshot files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use tokio::sync::Mutex;

use crate::error::{ServiceError, ServiceResult};
use crate::session::{Session, Snapshot};

pub type SessionHandle = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Default)]
struct Inner {
    sessions: RwLock<HashMap<String, SessionHandle>>,
    /// Serialises creations that carry an idempotency token.
    tokens: Mutex<HashMap<String, String>>,
    data_dir: Option<PathBuf>,
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

/// Writes `<dir>/<id>.json` through a temporary file and a rename.
pub fn write_snapshot(dir: &Path, snapshot: &Snapshot) -> ServiceResult<()> {
    let text = serde_json::to_string_pretty(snapshot).map_err(internal)?;
    let path = dir.join(format!("{}.json", snapshot.id));
    let tmp = dir.join(format!("{}.json.tmp", snapshot.id));
    fs::write(&tmp, text).map_err(internal)?;
    fs::rename(&tmp, &path).map_err(internal)?;
    Ok(())
}

impl AppState {
    /// Sessions live in memory only.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Persists every session under `dir` and reloads any found there.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(internal)?;
        let mut sessions = HashMap::new();
        let mut tokens = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(internal)?;
            let snapshot: Snapshot =
                serde_json::from_str(&text).map_err(|e| internal(format!("{}: {e}", path.display())))?;
            let session = Session::restore(snapshot)?;
            if let Some(token) = session.token() {
                tokens.insert(token.to_string(), session.id().to_string());
            }
            tracing::info!(id = session.id(), labels = session.journal().len(), "restored session");
            sessions.insert(session.id().to_string(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            inner: Arc::new(Inner { sessions: RwLock::new(sessions), tokens: Mutex::new(tokens), data_dir: Some(dir) }),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.inner.data_dir.as_deref()
    }

    pub fn get(&self, id: &str) -> ServiceResult<SessionHandle> {
        let sessions = self.inner.sessions.read().expect("session map lock");
        sessions.get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().expect("session map lock").len()
    }

    pub fn persist(&self, snapshot: &Snapshot) -> ServiceResult<()> {
        match self.data_dir() {
            Some(dir) => write_snapshot(dir, snapshot),
            None => Ok(()),
        }
    }

    fn insert(&self, session: Session) -> SessionHandle {
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        self.inner.sessions.write().expect("session map lock").insert(id, handle.clone());
        handle
    }

    /// Creates a session, or returns the existing one for a repeated token.
    /// The boolean is true when a new session was created.
    pub async fn create(
        &self,
        config: direct_core::harness::config::ExperimentConfig,
        token: Option<String>,
    ) -> ServiceResult<(SessionHandle, bool)> {
        let build = |state: AppState, config, token| async move {
            let id = uuid::Uuid::new_v4().simple().to_string();
            let session = tokio::task::spawn_blocking(move || -> ServiceResult<Session> {
                let session = Session::create(id, token, config)?;
                state.persist(&session.snapshot())?;
                Ok(session)
            })
            .await
            .map_err(internal)??;
            Ok::<_, ServiceError>(session)
        };
        match token {
            None => {
                let session = build(self.clone(), config, None).await?;
                Ok((self.insert(session), true))
            }
            Some(token) => {
                let mut tokens = self.inner.tokens.lock().await;
                if let Some(id) = tokens.get(&token) {
                    let handle = self.get(id)?;
                    if handle.lock().await.config() != &config {
                        return Err(ServiceError::IdempotencyConflict);
                    }
                    return Ok((handle, false));
                }
                let session = build(self.clone(), config, Some(token.clone())).await?;
                tokens.insert(token, session.id().to_string());
                Ok((self.insert(session), true))
            }
        }
    }
}
