//! What clients are allowed to see of a session.
//!
//! Views and events never carry digit values: the code being entered stays
//! on the server.

use serde::{Deserialize, Serialize};
use vault_core::{CodeSession, DisplayPattern, Level, SessionEvent, SessionStatus};

/// Weights are sent with this many decimals.
pub const WEIGHT_DECIMALS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientStateView {
    pub level: Level,
    /// Pattern to display; `None` once the session is finished.
    pub pattern: Option<DisplayPattern>,
    /// Colors of the two answer buttons, only where they are shown on screen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_buttons: Option<[String; 2]>,
    pub accepted_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub status: SessionStatus,
    pub step: u64,
}

impl ClientStateView {
    pub fn of(session: &CodeSession) -> Self {
        let config = session.config();
        Self {
            level: config.level,
            pattern: session.current_pattern().cloned(),
            answer_buttons: config
                .level
                .shows_button_colors()
                .then(|| ["yellow".to_string(), "gray".to_string()]),
            accepted_count: session.accepted().len(),
            weights: (config.reveal_weights && !session.status().is_terminal())
                .then(|| round_weights(&session.weights(), WEIGHT_DECIMALS)),
            status: session.status(),
            step: session.step_index(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status.is_terminal()
    }
}

/// Session event as sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientEvent {
    DigitAccepted { position: usize, steps: usize },
    Inconsistency { position: usize },
    CodeComplete,
    VaultOpened,
    VaultFailed,
}

impl From<&SessionEvent> for ClientEvent {
    fn from(event: &SessionEvent) -> Self {
        match *event {
            SessionEvent::DigitAccepted { position, steps, .. } => ClientEvent::DigitAccepted { position, steps },
            SessionEvent::Inconsistency { position } => ClientEvent::Inconsistency { position },
            SessionEvent::CodeComplete => ClientEvent::CodeComplete,
            SessionEvent::VaultOpened => ClientEvent::VaultOpened,
            SessionEvent::VaultFailed => ClientEvent::VaultFailed,
        }
    }
}

/// Rounds to `decimals` places keeping the total at exactly 1 unit.
///
/// Largest-remainder rounding: every weight is floored to the grid and the
/// leftover units go to the largest remainders (ties to the lower digit).
pub fn round_weights(weights: &[f64], decimals: u32) -> Vec<f64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let scale = 10f64.powi(decimals as i32);
    let total: f64 = weights.iter().sum();
    let scaled: Vec<f64> = weights.iter().map(|w| w / total * scale).collect();
    let mut units: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let short = (scale as u64).saturating_sub(units.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = scaled[i] - scaled[i].floor();
        let rj = scaled[j] - scaled[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(short as usize) {
        units[i] += 1;
    }
    units.into_iter().map(|u| u as f64 / scale).collect()
}
