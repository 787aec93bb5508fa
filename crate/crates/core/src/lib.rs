//! Calibration-free code entry.
//!
//! A user enters a 4-digit code by reacting to two-color flash patterns. The
//! machine does not know what the user's actions mean: for every candidate
//! digit it labels the shared signal history the way that digit would have,
//! and keeps the digit whose labelling a single classifier explains best.
//! The winning labelling also yields the user's signal decoder, which is then
//! reused to enter the remaining digits faster.

pub mod classifier;
pub mod engine;
pub mod log;
pub mod planner;
pub mod session;
pub mod signal;
pub mod simulator;

pub use classifier::{fit, loo_log_score, predict_prob, ClassifierConfig, ClassifierModel, LabeledDataset};
pub use engine::{EngineParams, EngineState};
pub use log::{replay, LogRecord, ReplayError, Replayed};
pub use planner::{PlannerState, Symmetry, UnresolvedPairs};
pub use session::{CodeSession, Level, SessionConfig, SessionError, SessionEvent, SessionStatus};
pub use signal::{DisplayPattern, MeaningLabel, Signal, SignalMode};
