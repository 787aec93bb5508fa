//! Network service hosting live code-entry sessions.
//!
//! HTTP endpoints:
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/api/session` | `{"level":1, "reveal_weights":true, "seed":7, "code":[..]}` | 201 `{"session_id", "view"}` |
//! | GET | `/api/session/{id}` | | view |
//! | POST | `/api/session/{id}/signal` | `{"button":0}` or `{"point":[x,y]}` | `{"view", "events"}` |
//! | DELETE | `/api/session/{id}` | | 204 |
//! | GET | `/health` | | `{"status":"ok"}` |
//!
//! `/ws/session/{id}` streams the current view, then one view per step, and
//! closes after a terminal view. Text messages sent on it are signals.
//!
//! Errors are `{"error":{"code","message"}}` with codes `unknown_session`
//! (404), `session_terminal` (409), `malformed_signal` / `malformed_request`
//! (400), `invalid_level`, `invalid_code` and `signal_*` (422), `log_io` (500).
//!
//! Every session writes a JSONL log to `<log_dir>/<id>.jsonl`.

pub mod config;
pub mod error;
pub mod routes;
pub mod store;
pub mod view;

use std::path::Path;
use std::sync::Arc;

pub use config::{ConfigError, SeedPolicy, ServiceConfig};
pub use error::ApiError;
pub use routes::router;
pub use store::{CreateRequest, Created, StepReply, Store};
pub use view::{round_weights, ClientEvent, ClientStateView};

/// Serves until the listener fails. Spawns the idle-expiry sweep.
pub async fn serve(config: ServiceConfig, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let store = Arc::new(Store::new(config));
    let sweeper = store.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweeper.sweep_interval());
        loop {
            tick.tick().await;
            sweeper.expire_idle(std::time::Instant::now()).await;
        }
    });
    axum::serve(listener, router(store)).await
}

/// Rebuilds the final state of a logged session, verifying every record.
pub fn replay_log(path: &Path) -> Result<vault_core::Replayed, vault_core::ReplayError> {
    let file = std::fs::File::open(path).map_err(|source| vault_core::ReplayError::Io { line: 0, source })?;
    vault_core::replay(std::io::BufReader::new(file), true)
}
