//! In-memory session store with JSONL write-through.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, Mutex};
use vault_core::{CodeSession, Level, SessionConfig, Signal};

use crate::config::{SeedPolicy, ServiceConfig};
use crate::error::ApiError;
use crate::view::{ClientEvent, ClientStateView};

/// Views a slow subscriber may fall behind before it is disconnected.
const SUBSCRIBER_BUFFER: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub level: u8,
    #[serde(default)]
    pub reveal_weights: Option<bool>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub code: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub view: ClientStateView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReply {
    pub view: ClientStateView,
    pub events: Vec<ClientEvent>,
}

struct Slot {
    session: CodeSession,
    log: BufWriter<File>,
    written: usize,
    last_active: Instant,
    /// Dropped when the session leaves the store; subscribers then see the end of the stream.
    views: Option<broadcast::Sender<ClientStateView>>,
}

impl Slot {
    fn flush_log(&mut self) -> std::io::Result<()> {
        for record in &self.session.log()[self.written..] {
            writeln!(self.log, "{}", record.to_line())?;
        }
        self.written = self.session.log().len();
        self.log.flush()
    }

    fn close(&mut self, kind: &str) -> std::io::Result<()> {
        self.session.annotate(kind, json!({}));
        self.views = None;
        self.flush_log()
    }
}

pub struct SessionHandle {
    slot: Mutex<Slot>,
}

pub struct Store {
    config: Arc<ServiceConfig>,
    sessions: StdMutex<HashMap<String, Arc<SessionHandle>>>,
}

impl Store {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config: Arc::new(config),
            sessions: StdMutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn session_config(&self, request: &CreateRequest) -> Result<SessionConfig, ApiError> {
        let level = Level::try_from(request.level).map_err(ApiError::InvalidLevel)?;
        let seed = request.seed.unwrap_or(match self.config.seed_policy {
            SeedPolicy::Fixed(seed) => seed,
            SeedPolicy::Random => rand::random(),
        });
        let code = request.code.clone().unwrap_or_else(|| self.config.secret_code.clone());
        let mut config = SessionConfig::new(level, code, seed);
        config.engine = self.config.engine;
        config.transfer = self.config.transfer;
        config.reveal_weights = request.reveal_weights.unwrap_or(self.config.reveal_weights);
        Ok(config)
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.config.log_dir.join(format!("{id}.jsonl"))
    }

    pub fn create(&self, request: &CreateRequest) -> Result<Created, ApiError> {
        let config = self.session_config(request)?;
        let (session, _) = CodeSession::start(config)?;
        let id = format!("{:032x}", rand::random::<u128>());
        std::fs::create_dir_all(&self.config.log_dir)?;
        let file = File::options().write(true).create_new(true).open(self.log_path(&id))?;
        let (tx, _) = broadcast::channel(SUBSCRIBER_BUFFER);
        let mut slot = Slot {
            session,
            log: BufWriter::new(file),
            written: 0,
            last_active: Instant::now(),
            views: Some(tx),
        };
        slot.flush_log()?;
        let view = ClientStateView::of(&slot.session);
        tracing::info!(session = %id, level = request.level, "session created");
        let handle = Arc::new(SessionHandle { slot: Mutex::new(slot) });
        self.sessions.lock().unwrap().insert(id.clone(), handle);
        Ok(Created { session_id: id, view })
    }

    pub async fn view(&self, id: &str) -> Result<ClientStateView, ApiError> {
        let handle = self.handle(id)?;
        let slot = handle.slot.lock().await;
        if slot.views.is_none() {
            return Err(ApiError::UnknownSession(id.to_string()));
        }
        Ok(ClientStateView::of(&slot.session))
    }

    /// Parses and applies one signal. Signal handling is serialized per session.
    pub async fn submit_json(&self, id: &str, body: &[u8]) -> Result<StepReply, ApiError> {
        let handle = self.handle(id)?;
        let signal: Signal = serde_json::from_slice(body).map_err(|e| ApiError::MalformedSignal(e.to_string()))?;
        self.submit_to(&handle, id, &signal).await
    }

    pub async fn submit(&self, id: &str, signal: &Signal) -> Result<StepReply, ApiError> {
        let handle = self.handle(id)?;
        self.submit_to(&handle, id, signal).await
    }

    async fn submit_to(&self, handle: &SessionHandle, id: &str, signal: &Signal) -> Result<StepReply, ApiError> {
        let mut slot = handle.slot.lock().await;
        let Some(views) = slot.views.clone() else {
            return Err(ApiError::UnknownSession(id.to_string()));
        };
        let outcome = slot.session.step(signal)?;
        slot.last_active = Instant::now();
        let written = slot.flush_log();
        let view = ClientStateView::of(&slot.session);
        // no receivers is fine
        let _ = views.send(view.clone());
        if view.is_terminal() {
            tracing::info!(session = %id, status = ?view.status, steps = view.step, "session finished");
        }
        written?;
        Ok(StepReply {
            view,
            events: outcome.events.iter().map(ClientEvent::from).collect(),
        })
    }

    /// Current view plus a receiver for every later one.
    pub async fn subscribe(
        &self,
        id: &str,
    ) -> Result<(ClientStateView, broadcast::Receiver<ClientStateView>), ApiError> {
        let handle = self.handle(id)?;
        let slot = handle.slot.lock().await;
        let Some(views) = &slot.views else {
            return Err(ApiError::UnknownSession(id.to_string()));
        };
        Ok((ClientStateView::of(&slot.session), views.subscribe()))
    }

    pub async fn close(&self, id: &str) -> Result<(), ApiError> {
        let handle = self.sessions.lock().unwrap().remove(id);
        let handle = handle.ok_or_else(|| ApiError::UnknownSession(id.to_string()))?;
        let mut slot = handle.slot.lock().await;
        tracing::info!(session = %id, "session closed");
        slot.close("session_closed")?;
        Ok(())
    }

    /// Drops sessions idle for longer than the configured timeout as of `now`.
    pub async fn expire_idle(&self, now: Instant) -> Vec<String> {
        let timeout = Duration::from_secs(self.config.idle_timeout_secs);
        let handles: Vec<(String, Arc<SessionHandle>)> = self
            .sessions
            .lock()
            .unwrap()
            .iter()
            .map(|(id, h)| (id.clone(), h.clone()))
            .collect();
        let mut expired = Vec::new();
        for (id, handle) in handles {
            let mut slot = handle.slot.lock().await;
            if slot.views.is_none() || now.saturating_duration_since(slot.last_active) < timeout {
                continue;
            }
            self.sessions.lock().unwrap().remove(&id);
            if let Err(e) = slot.close("session_expired") {
                tracing::warn!(session = %id, error = %e, "could not log expiry");
            }
            tracing::info!(session = %id, "session expired");
            expired.push(id);
        }
        expired
    }

    /// How often the expiry sweep runs.
    pub fn sweep_interval(&self) -> Duration {
        Duration::from_secs((self.config.idle_timeout_secs / 4).clamp(1, 60))
    }
}
