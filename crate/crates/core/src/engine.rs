//! Consistency engine: one labelling of the shared signal history per digit
//! hypothesis, scored by leave-one-out self-consistency.
//!
//! Under hypothesis `d`, step `i` carries label `pattern_i[d]`. A user who
//! really intends `d` produces signals whose labelling under `d` is explained
//! by a single classifier; any other labelling mixes the user's two signal
//! classes. Scores become weights through a softmax with inverse temperature
//! `beta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{fit, loo_log_score, ClassifierConfig, ClassifierError, ClassifierModel, LabeledDataset};
use crate::planner::UnresolvedPairs;
use crate::signal::{validate_signal, DisplayPattern, Signal, SignalError, SignalMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Softmax inverse temperature applied to consistency scores.
    pub beta: f64,
    /// Minimum weight for accepting a digit.
    pub theta: f64,
    /// Minimum number of ingested steps before a decision.
    pub min_steps: usize,
    pub classifier: ClassifierConfig,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            beta: 8.0,
            theta: 0.95,
            min_steps: 16,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(EngineError::InvalidParams("beta must be positive and finite"));
        }
        if !(self.theta > 0.5 && self.theta < 1.0) {
            return Err(EngineError::InvalidParams("theta must lie in (0.5, 1)"));
        }
        if self.min_steps < 1 {
            return Err(EngineError::InvalidParams("min_steps must be at least 1"));
        }
        self.classifier.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("no steps ingested yet")]
    EmptyHistory,
    #[error("digit {0} outside the symbol set")]
    UnknownDigit(usize),
    #[error("pattern covers {got} digits, engine has {expected}")]
    PatternSize { expected: usize, got: usize },
    #[error("invalid engine parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub pattern: DisplayPattern,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    symbols: usize,
    mode: SignalMode,
    params: EngineParams,
    history: Vec<Step>,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

/// `softmax(beta * score)`, shifted by the maximum for stability.
pub fn softmax(scores: &[f64], beta: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (beta * (s - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Unique arg-max, or `None` on a tie.
pub fn unique_argmax(values: &[f64]) -> Option<usize> {
    let (best, &max) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let ties = values.iter().filter(|&&v| v == max).count();
    (ties == 1).then_some(best)
}

impl EngineState {
    pub fn new(symbols: usize, mode: SignalMode, params: EngineParams) -> Result<Self, EngineError> {
        params.validate()?;
        assert!(symbols >= 1, "engine needs at least one hypothesis");
        Ok(Self {
            symbols,
            mode,
            params,
            history: Vec::new(),
            scores: vec![0.0; symbols],
            weights: vec![1.0 / symbols as f64; symbols],
        })
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn mode(&self) -> SignalMode {
        self.mode
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn history(&self) -> &[Step] {
        &self.history
    }

    pub fn steps(&self) -> usize {
        self.history.len()
    }

    /// Per-hypothesis mean LOO log-probability; meaningful after one step.
    pub fn scores(&self) -> Result<&[f64], EngineError> {
        if self.history.is_empty() {
            return Err(EngineError::EmptyHistory);
        }
        Ok(&self.scores)
    }

    pub fn weights(&self) -> Result<&[f64], EngineError> {
        if self.history.is_empty() {
            return Err(EngineError::EmptyHistory);
        }
        Ok(&self.weights)
    }

    /// Weights, uniform before the first step.
    pub fn weights_or_uniform(&self) -> &[f64] {
        &self.weights
    }

    /// The history labelled under hypothesis `digit`.
    pub fn dataset(&self, digit: usize) -> Result<LabeledDataset, EngineError> {
        if digit >= self.symbols {
            return Err(EngineError::UnknownDigit(digit));
        }
        let signals = self.history.iter().map(|s| s.signal.clone()).collect();
        let labels = self
            .history
            .iter()
            .map(|s| s.pattern.labels()[digit])
            .collect();
        Ok(LabeledDataset::new(signals, labels)?)
    }

    pub fn ingest(&self, pattern: &DisplayPattern, signal: &Signal) -> Result<EngineState, EngineError> {
        validate_signal(signal, self.mode)?;
        if pattern.symbols() != self.symbols {
            return Err(EngineError::PatternSize {
                expected: self.symbols,
                got: pattern.symbols(),
            });
        }
        let mut next = self.clone();
        next.history.push(Step {
            pattern: pattern.clone(),
            signal: signal.clone(),
        });
        next.rescore()?;
        Ok(next)
    }

    fn rescore(&mut self) -> Result<(), EngineError> {
        let scores = (0..self.symbols)
            .map(|d| Ok(loo_log_score(&self.dataset(d)?, &self.params.classifier)?))
            .collect::<Result<Vec<f64>, EngineError>>()?;
        self.weights = softmax(&scores, self.params.beta);
        self.scores = scores;
        Ok(())
    }

    /// Accepts the arg-max digit once enough steps are in, its weight reaches
    /// `theta`, and no unresolved pair involves it.
    pub fn decide(&self, unresolved: &UnresolvedPairs) -> Option<usize> {
        if self.history.len() < self.params.min_steps {
            return None;
        }
        let best = unique_argmax(&self.weights)?;
        if self.weights[best] < self.params.theta || unresolved.involves(best) {
            return None;
        }
        Some(best)
    }

    /// Classifier fit on the whole history labelled under `digit`.
    pub fn learned_classifier(&self, digit: usize) -> Result<ClassifierModel, EngineError> {
        if self.history.is_empty() {
            return Err(EngineError::EmptyHistory);
        }
        Ok(fit(&self.dataset(digit)?, &self.params.classifier)?)
    }
}
