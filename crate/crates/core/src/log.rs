//! JSONL event log and deterministic replay.
//!
//! Line 1 is a `session_start` record carrying the seed and the full session
//! config. Each accepted signal produces a `signal` record holding the signal,
//! the pattern it answered and the state hash after the step, followed by one
//! record per derived event. `t` is the step index; records produced by the
//! same step share it.

use std::collections::VecDeque;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::session::{CodeSession, SessionConfig, SessionError, SessionEvent};
use crate::signal::{DisplayPattern, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub t: u64,
    pub kind: String,
    #[serde(default)]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Kinds written by the service that do not affect session state.
pub const ANNOTATION_KINDS: &[&str] = &["session_expired", "session_closed"];

impl LogRecord {
    pub fn start(config: &SessionConfig) -> Self {
        Self {
            t: 0,
            kind: "session_start".into(),
            payload: serde_json::to_value(config).expect("config serializes"),
            seed: Some(config.seed),
        }
    }

    pub fn event(t: u64, event: &SessionEvent) -> Self {
        let tagged = serde_json::to_value(event).expect("event serializes");
        Self {
            t,
            kind: event.kind().into(),
            payload: tagged.get("payload").cloned().unwrap_or(Value::Null),
            seed: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn parse(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    fn as_event(&self) -> Option<Result<SessionEvent, serde_json::Error>> {
        if !matches!(
            self.kind.as_str(),
            "digit_accepted" | "inconsistency" | "code_complete" | "vault_opened" | "vault_failed"
        ) {
            return None;
        }
        let mut tagged = serde_json::Map::new();
        tagged.insert("kind".into(), Value::String(self.kind.clone()));
        if !self.payload.is_null() {
            tagged.insert("payload".into(), self.payload.clone());
        }
        Some(serde_json::from_value(Value::Object(tagged)))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalPayload {
    signal: Signal,
    pattern: DisplayPattern,
    state_hash: String,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("log is empty")]
    Empty,
    #[error("line 1: first record must be session_start")]
    MissingStart,
    #[error("line 1: session_start record carries no seed")]
    MissingSeed,
    #[error("line {line}: {source}")]
    Session {
        line: usize,
        #[source]
        source: SessionError,
    },
    #[error("line {line}: log diverges from recomputed session: {detail}")]
    Divergence { line: usize, detail: String },
    #[error("line {line}: read failed: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

impl ReplayError {
    /// 1-based line number the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            ReplayError::Malformed { line, .. }
            | ReplayError::Session { line, .. }
            | ReplayError::Divergence { line, .. }
            | ReplayError::Io { line, .. } => Some(*line),
            ReplayError::MissingStart | ReplayError::MissingSeed => Some(1),
            ReplayError::Empty => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replayed {
    pub session: CodeSession,
    pub records: usize,
    pub signals: usize,
    /// A final line without newline that did not parse was skipped.
    pub torn_tail: bool,
}

/// Rebuilds a session from its log.
///
/// With `verify`, every recorded pattern, state hash and derived event is
/// checked against the recomputation; without it only the signals are used.
pub fn replay<R: BufRead>(mut reader: R, verify: bool) -> Result<Replayed, ReplayError> {
    let mut session: Option<CodeSession> = None;
    let mut pending: VecDeque<SessionEvent> = VecDeque::new();
    let mut records = 0;
    let mut signals = 0;
    let mut torn_tail = false;
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        let read = reader
            .read_line(&mut buf)
            .map_err(|source| ReplayError::Io { line: line + 1, source })?;
        if read == 0 {
            break;
        }
        line += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        let record = match LogRecord::parse(text) {
            Ok(r) => r,
            Err(_) if !complete => {
                torn_tail = true;
                break;
            }
            Err(e) => {
                return Err(ReplayError::Malformed {
                    line,
                    reason: e.to_string(),
                })
            }
        };
        records += 1;

        let Some(current) = session.as_mut() else {
            if record.kind != "session_start" {
                return Err(ReplayError::MissingStart);
            }
            let seed = record.seed.ok_or(ReplayError::MissingSeed)?;
            let mut config: SessionConfig =
                serde_json::from_value(record.payload).map_err(|e| ReplayError::Malformed {
                    line,
                    reason: e.to_string(),
                })?;
            config.seed = seed;
            let (s, _) = CodeSession::start(config).map_err(|source| ReplayError::Session { line, source })?;
            session = Some(s);
            continue;
        };

        if record.kind == "signal" {
            let payload: SignalPayload =
                serde_json::from_value(record.payload).map_err(|e| ReplayError::Malformed {
                    line,
                    reason: e.to_string(),
                })?;
            if verify {
                if let Some(event) = pending.front() {
                    return Err(ReplayError::Divergence {
                        line,
                        detail: format!("expected {} record before next signal", event.kind()),
                    });
                }
                if current.current_pattern() != Some(&payload.pattern) {
                    return Err(ReplayError::Divergence {
                        line,
                        detail: "recorded pattern differs from planner output".into(),
                    });
                }
            }
            let outcome = current
                .step(&payload.signal)
                .map_err(|source| ReplayError::Session { line, source })?;
            signals += 1;
            if verify {
                if record.t != current.step_index() {
                    return Err(ReplayError::Divergence {
                        line,
                        detail: format!("step index {} != {}", record.t, current.step_index()),
                    });
                }
                if current.state_hash() != payload.state_hash {
                    return Err(ReplayError::Divergence {
                        line,
                        detail: "state hash mismatch".into(),
                    });
                }
                pending.extend(outcome.events);
            }
        } else if let Some(event) = record.as_event() {
            let event = event.map_err(|e| ReplayError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            if verify {
                let expected = pending.pop_front();
                if expected.as_ref() != Some(&event) {
                    return Err(ReplayError::Divergence {
                        line,
                        detail: format!("unexpected {} record: {:?} vs {:?}", record.kind, event, expected),
                    });
                }
            }
        } else if !ANNOTATION_KINDS.contains(&record.kind.as_str()) {
            return Err(ReplayError::Malformed {
                line,
                reason: format!("unknown record kind {:?}", record.kind),
            });
        }
    }
    let session = session.ok_or(ReplayError::Empty)?;
    Ok(Replayed {
        session,
        records,
        signals,
        torn_tail,
    })
}

/// Parses a complete log held in memory.
pub fn replay_str(text: &str, verify: bool) -> Result<Replayed, ReplayError> {
    replay(text.as_bytes(), verify)
}

/// Renders records as JSONL text.
pub fn to_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}
