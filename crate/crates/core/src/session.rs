//! The 4-digit vault protocol.
//!
//! Each digit is entered in its own sub-session. Level 1 shows colored answer
//! buttons, so presses are eliminated against the pattern directly. Levels 4
//! and 5 start calibration-free: the first digit is found by the consistency
//! engine, and the decoder learned along the way is reused as a Bayes filter
//! for the remaining digits (unless transfer is disabled).

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{fit, ClassifierError, ClassifierModel, LabeledDataset};
use crate::engine::{unique_argmax, EngineError, EngineParams, EngineState, Step};
use crate::log::LogRecord;
use crate::planner::{PlannerState, Symmetry, UnresolvedPairs};
use crate::signal::{validate_signal, DisplayPattern, MeaningLabel, Signal, SignalError, SignalMode, DEFAULT_SYMBOLS};

pub const CODE_LENGTH: usize = 4;

/// Game level, numbered as on the public demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    /// Answer buttons are colored: meanings are known.
    KnownMeanings,
    /// Two uncolored buttons.
    UnknownDiscrete,
    /// Free clicks anywhere on a 2D surface.
    UnknownContinuous,
}

impl Level {
    pub fn number(self) -> u8 {
        match self {
            Level::KnownMeanings => 1,
            Level::UnknownDiscrete => 4,
            Level::UnknownContinuous => 5,
        }
    }

    pub fn signal_mode(self) -> SignalMode {
        match self {
            Level::KnownMeanings | Level::UnknownDiscrete => SignalMode::Discrete { buttons: 2 },
            Level::UnknownContinuous => SignalMode::Continuous { dim: 2 },
        }
    }

    /// Whether the answer buttons carry their colors on screen.
    pub fn shows_button_colors(self) -> bool {
        self == Level::KnownMeanings
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Level::KnownMeanings),
            4 => Ok(Level::UnknownDiscrete),
            5 => Ok(Level::UnknownContinuous),
            other => Err(format!("unknown level {other} (expected 1, 4 or 5)")),
        }
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level.number()
    }
}

fn default_true() -> bool {
    true
}

fn default_symbols() -> usize {
    DEFAULT_SYMBOLS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub level: Level,
    pub code: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub engine: EngineParams,
    #[serde(default)]
    pub reveal_weights: bool,
    /// Reuse the decoder learned on earlier digits.
    #[serde(default = "default_true")]
    pub transfer: bool,
    #[serde(default = "default_symbols")]
    pub symbols: usize,
}

impl SessionConfig {
    pub fn new(level: Level, code: Vec<usize>, seed: u64) -> Self {
        Self {
            level,
            code,
            seed,
            engine: EngineParams::default(),
            reveal_weights: false,
            transfer: true,
            symbols: DEFAULT_SYMBOLS,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.symbols < 2 {
            return Err(SessionError::InvalidConfig(format!(
                "symbol set needs at least 2 digits, got {}",
                self.symbols
            )));
        }
        if self.code.len() != CODE_LENGTH {
            return Err(SessionError::InvalidCode(format!(
                "code must have {CODE_LENGTH} digits, got {}",
                self.code.len()
            )));
        }
        if let Some(d) = self.code.iter().find(|&&d| d >= self.symbols) {
            return Err(SessionError::InvalidCode(format!(
                "code digit {d} outside 0..{}",
                self.symbols
            )));
        }
        self.engine
            .validate()
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    Opened,
    Failed,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        self != SessionStatus::InProgress
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    DigitAccepted {
        digit: usize,
        position: usize,
        steps: usize,
        confidence: f64,
    },
    /// Known-meanings press contradicted every remaining candidate; candidates reset.
    Inconsistency { position: usize },
    CodeComplete,
    VaultOpened,
    VaultFailed,
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::DigitAccepted { .. } => "digit_accepted",
            SessionEvent::Inconsistency { .. } => "inconsistency",
            SessionEvent::CodeComplete => "code_complete",
            SessionEvent::VaultOpened => "vault_opened",
            SessionEvent::VaultFailed => "vault_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("session already finished ({0:?})")]
    Terminal(SessionStatus),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidCode(_) => "invalid_code",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::Signal(e) => e.code(),
            SessionError::Terminal(_) => "session_terminal",
            SessionError::Engine(_) | SessionError::Classifier(_) => "internal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no candidate digit is consistent with the press")]
pub struct Inconsistent;

/// Candidates whose label under `pattern` matches the pressed label.
pub fn elimination_update(
    candidates: &BTreeSet<usize>,
    pattern: &DisplayPattern,
    pressed: MeaningLabel,
) -> Result<BTreeSet<usize>, Inconsistent> {
    let next: BTreeSet<usize> = candidates
        .iter()
        .copied()
        .filter(|&d| pattern.labels().get(d) == Some(&pressed))
        .collect();
    if next.is_empty() {
        Err(Inconsistent)
    } else {
        Ok(next)
    }
}

/// One Bayes-filter step using a learned decoder as the likelihood.
pub fn transfer_update(
    posterior: &[f64],
    pattern: &DisplayPattern,
    signal: &Signal,
    decoder: &ClassifierModel,
) -> Result<Vec<f64>, ClassifierError> {
    let p_a = decoder.label_prob(signal, MeaningLabel::A)?;
    let p_b = decoder.label_prob(signal, MeaningLabel::B)?;
    let unnormalized: Vec<f64> = posterior
        .iter()
        .zip(pattern.labels())
        .map(|(&w, &l)| w * if l == MeaningLabel::A { p_a } else { p_b })
        .collect();
    let total: f64 = unnormalized.iter().sum();
    Ok(unnormalized.into_iter().map(|w| w / total).collect())
}

/// Decision rule for the transfer stage: unique arg-max above `theta`, not
/// sharing its label sequence with any other digit.
pub fn decide_posterior(posterior: &[f64], theta: f64, unresolved: &UnresolvedPairs) -> Option<usize> {
    let best = unique_argmax(posterior)?;
    (posterior[best] >= theta && !unresolved.involves(best)).then_some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    Elimination { candidates: BTreeSet<usize> },
    Calibration { engine: EngineState },
    Transfer { posterior: Vec<f64>, history: Vec<Step> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub events: Vec<SessionEvent>,
    pub next_pattern: Option<DisplayPattern>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CodeSession {
    config: SessionConfig,
    status: SessionStatus,
    accepted: Vec<usize>,
    stage: Stage,
    planner: PlannerState,
    pattern: Option<DisplayPattern>,
    decoder: Option<ClassifierModel>,
    decoder_data: LabeledDataset,
    digit_steps: usize,
    steps_per_digit: Vec<usize>,
    step_index: u64,
    #[serde(skip)]
    rng: ChaCha8Rng,
    #[serde(skip)]
    log: Vec<LogRecord>,
}

impl CodeSession {
    /// Starts a session and returns it with the first pattern to display.
    pub fn start(config: SessionConfig) -> Result<(CodeSession, DisplayPattern), SessionError> {
        config.validate()?;
        let symbols = config.symbols;
        let start = LogRecord::start(&config);
        let mut session = CodeSession {
            stage: Stage::Elimination {
                candidates: BTreeSet::new(),
            },
            planner: PlannerState::new(symbols, Symmetry::Identity),
            status: SessionStatus::InProgress,
            accepted: Vec::new(),
            pattern: None,
            decoder: None,
            decoder_data: LabeledDataset::empty(),
            digit_steps: 0,
            steps_per_digit: Vec::new(),
            step_index: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            log: vec![start],
            config,
        };
        session.begin_digit()?;
        session.advance_pattern();
        let first = session.pattern.clone().expect("fresh session shows a pattern");
        Ok((session, first))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn accepted(&self) -> &[usize] {
        &self.accepted
    }

    pub fn current_pattern(&self) -> Option<&DisplayPattern> {
        self.pattern.as_ref()
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn steps_per_digit(&self) -> &[usize] {
        &self.steps_per_digit
    }

    pub fn decoder(&self) -> Option<&ClassifierModel> {
        self.decoder.as_ref()
    }

    pub fn planner(&self) -> &PlannerState {
        &self.planner
    }

    /// Engine state while the current digit is being calibrated.
    pub fn engine(&self) -> Option<&EngineState> {
        match &self.stage {
            Stage::Calibration { engine } => Some(engine),
            _ => None,
        }
    }

    /// Name of the inference mode used for the current digit.
    pub fn stage_name(&self) -> &'static str {
        match self.stage {
            Stage::Elimination { .. } => "elimination",
            Stage::Calibration { .. } => "calibration",
            Stage::Transfer { .. } => "transfer",
        }
    }

    /// Log records produced so far, starting with the session-start record.
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// Current belief over digits for the digit being entered.
    pub fn weights(&self) -> Vec<f64> {
        match &self.stage {
            Stage::Elimination { candidates } => {
                let share = 1.0 / candidates.len() as f64;
                (0..self.config.symbols)
                    .map(|d| if candidates.contains(&d) { share } else { 0.0 })
                    .collect()
            }
            Stage::Calibration { engine } => engine.weights_or_uniform().to_vec(),
            Stage::Transfer { posterior, .. } => posterior.clone(),
        }
    }

    /// SHA-256 over the complete session state, hex encoded.
    pub fn state_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            session: &'a CodeSession,
            rng_word_pos: String,
        }
        let bytes = serde_json::to_vec(&Hashed {
            session: self,
            rng_word_pos: self.rng.get_word_pos().to_string(),
        })
        .expect("session state serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn begin_digit(&mut self) -> Result<(), SessionError> {
        let symbols = self.config.symbols;
        self.digit_steps = 0;
        let transfer_ready = self.config.transfer && self.decoder.as_ref().is_some_and(|m| m.is_informed());
        let (stage, symmetry) = if self.config.level == Level::KnownMeanings {
            (
                Stage::Elimination {
                    candidates: (0..symbols).collect(),
                },
                Symmetry::Identity,
            )
        } else if transfer_ready {
            (
                Stage::Transfer {
                    posterior: vec![1.0 / symbols as f64; symbols],
                    history: Vec::new(),
                },
                Symmetry::Identity,
            )
        } else {
            let engine = EngineState::new(symbols, self.config.level.signal_mode(), self.config.engine)?;
            (Stage::Calibration { engine }, Symmetry::Complement)
        };
        self.stage = stage;
        self.planner = PlannerState::new(symbols, symmetry);
        Ok(())
    }

    fn advance_pattern(&mut self) {
        let weights = self.weights();
        let planner = std::mem::replace(&mut self.planner, PlannerState::new(1, Symmetry::Identity));
        self.planner = match &self.stage {
            Stage::Elimination { candidates } => {
                planner.with_plausible((0..self.config.symbols).map(|d| candidates.contains(&d)).collect())
            }
            _ => planner.with_plausible_weights(&weights),
        };
        self.pattern = Some(self.planner.next_pattern(&weights, &mut self.rng));
    }

    /// Feeds one signal answering the currently displayed pattern.
    pub fn step(&mut self, signal: &Signal) -> Result<StepOutcome, SessionError> {
        if self.status.is_terminal() {
            return Err(SessionError::Terminal(self.status));
        }
        validate_signal(signal, self.config.level.signal_mode())?;
        let pattern = self.pattern.clone().expect("in-progress session shows a pattern");
        let planner = self.planner.record_pattern(&pattern);
        let theta = self.config.engine.theta;
        let position = self.accepted.len();
        let mut events = Vec::new();

        // fallible work first, so errors leave the session untouched
        let (stage, decision) = match &self.stage {
            Stage::Elimination { candidates } => {
                let Signal::Discrete(button) = signal else {
                    unreachable!("validated as discrete")
                };
                let pressed = MeaningLabel::from_button(*button).expect("validated button");
                let next = match elimination_update(candidates, &pattern, pressed) {
                    Ok(next) => next,
                    Err(Inconsistent) => {
                        events.push(SessionEvent::Inconsistency { position });
                        (0..self.config.symbols).collect()
                    }
                };
                let decision = (next.len() == 1).then(|| (*next.first().unwrap(), 1.0));
                (Stage::Elimination { candidates: next }, decision)
            }
            Stage::Calibration { engine } => {
                let engine = engine.ingest(&pattern, signal)?;
                let decision = engine
                    .decide(&planner.unresolved())
                    .map(|d| (d, engine.weights_or_uniform()[d]));
                (Stage::Calibration { engine }, decision)
            }
            Stage::Transfer { posterior, history } => {
                let decoder = self.decoder.as_ref().expect("transfer stage has a decoder");
                let posterior = transfer_update(posterior, &pattern, signal, decoder)?;
                let decision = decide_posterior(&posterior, theta, &planner.unresolved()).map(|d| (d, posterior[d]));
                let mut history = history.clone();
                history.push(Step {
                    pattern: pattern.clone(),
                    signal: signal.clone(),
                });
                (Stage::Transfer { posterior, history }, decision)
            }
        };

        let mut decoder_update = None;
        if let Some((digit, _)) = decision {
            if self.config.level != Level::KnownMeanings && self.config.transfer {
                let mut data = self.decoder_data.clone();
                let steps: &[Step] = match &stage {
                    Stage::Calibration { engine } => engine.history(),
                    Stage::Transfer { history, .. } => history,
                    Stage::Elimination { .. } => &[],
                };
                for s in steps {
                    data.push(s.signal.clone(), s.pattern.labels()[digit])?;
                }
                let model = fit(&data, &self.config.engine.classifier)?;
                decoder_update = Some((data, model));
            }
        }

        self.step_index += 1;
        self.digit_steps += 1;
        self.planner = planner;
        self.stage = stage;
        if let Some((data, model)) = decoder_update {
            self.decoder_data = data;
            self.decoder = Some(model);
        }

        if let Some((digit, confidence)) = decision {
            events.push(SessionEvent::DigitAccepted {
                digit,
                position,
                steps: self.digit_steps,
                confidence,
            });
            self.accepted.push(digit);
            self.steps_per_digit.push(self.digit_steps);
            if self.accepted.len() == CODE_LENGTH {
                events.push(SessionEvent::CodeComplete);
                if self.accepted == self.config.code {
                    self.status = SessionStatus::Opened;
                    events.push(SessionEvent::VaultOpened);
                } else {
                    self.status = SessionStatus::Failed;
                    events.push(SessionEvent::VaultFailed);
                }
                self.pattern = None;
            } else {
                self.begin_digit()?;
            }
        }
        if !self.status.is_terminal() {
            self.advance_pattern();
        }

        let t = self.step_index;
        self.log.push(LogRecord {
            t,
            kind: "signal".into(),
            payload: json!({
                "signal": signal,
                "pattern": pattern,
                "state_hash": self.state_hash(),
            }),
            seed: None,
        });
        for event in &events {
            self.log.push(LogRecord::event(t, event));
        }

        Ok(StepOutcome {
            events,
            next_pattern: self.pattern.clone(),
        })
    }

    /// Appends a service-side annotation (e.g. expiry) to the log.
    pub fn annotate(&mut self, kind: &str, payload: serde_json::Value) {
        self.log.push(LogRecord {
            t: self.step_index,
            kind: kind.into(),
            payload,
            seed: None,
        });
    }
}
