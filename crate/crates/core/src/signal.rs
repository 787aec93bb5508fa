//! Signals, meaning labels and display patterns.
//!
//! Every other module speaks in these types. A [`DisplayPattern`] assigns each
//! digit of the symbol set to one of two meaning classes; a [`Signal`] is one
//! user action, either a button press or a raw feature vector.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of digits on the vault keypad.
pub const DEFAULT_SYMBOLS: usize = 10;

/// One of the two meaning classes. `A` is rendered yellow, `B` gray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeaningLabel {
    A,
    B,
}

impl MeaningLabel {
    pub fn complement(self) -> Self {
        match self {
            MeaningLabel::A => MeaningLabel::B,
            MeaningLabel::B => MeaningLabel::A,
        }
    }

    /// Button index conventionally bound to this label in the known-meanings level.
    pub fn button(self) -> u32 {
        match self {
            MeaningLabel::A => 0,
            MeaningLabel::B => 1,
        }
    }

    pub fn from_button(button: u32) -> Option<Self> {
        match button {
            0 => Some(MeaningLabel::A),
            1 => Some(MeaningLabel::B),
            _ => None,
        }
    }
}

impl fmt::Display for MeaningLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeaningLabel::A => f.write_str("A"),
            MeaningLabel::B => f.write_str("B"),
        }
    }
}

/// A single user action.
///
/// Wire form is `{"button":k}` or `{"point":[x,y,...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    #[serde(rename = "button")]
    Discrete(u32),
    #[serde(rename = "point")]
    Continuous(Vec<f64>),
}

impl Signal {
    pub fn from_json(text: &str) -> Result<Self, WireError> {
        serde_json::from_str(text).map_err(WireError::from)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("signal serialization is infallible")
    }
}

/// Signal shape accepted by a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Discrete { buttons: u32 },
    Continuous { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("expected a {expected} signal, got a {got} signal")]
    WrongVariant {
        expected: &'static str,
        got: &'static str,
    },
    #[error("expected {expected} feature dimensions, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("feature component {index} is not finite")]
    NonFinite { index: usize },
    #[error("button {button} out of range (session has {buttons} buttons)")]
    UnknownButton { button: u32, buttons: u32 },
}

impl SignalError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SignalError::WrongVariant { .. } => "signal_wrong_variant",
            SignalError::WrongDimension { .. } => "signal_wrong_dimension",
            SignalError::NonFinite { .. } => "signal_non_finite",
            SignalError::UnknownButton { .. } => "signal_unknown_button",
        }
    }
}

fn variant_name(signal: &Signal) -> &'static str {
    match signal {
        Signal::Discrete(_) => "button",
        Signal::Continuous(_) => "point",
    }
}

pub fn validate_signal(signal: &Signal, mode: SignalMode) -> Result<(), SignalError> {
    match (signal, mode) {
        (Signal::Discrete(button), SignalMode::Discrete { buttons }) => {
            if *button >= buttons {
                return Err(SignalError::UnknownButton {
                    button: *button,
                    buttons,
                });
            }
            Ok(())
        }
        (Signal::Continuous(features), SignalMode::Continuous { dim }) => {
            if let Some(index) = features.iter().position(|x| !x.is_finite()) {
                return Err(SignalError::NonFinite { index });
            }
            if features.len() != dim {
                return Err(SignalError::WrongDimension {
                    expected: dim,
                    got: features.len(),
                });
            }
            Ok(())
        }
        (signal, SignalMode::Discrete { .. }) => Err(SignalError::WrongVariant {
            expected: "button",
            got: variant_name(signal),
        }),
        (signal, SignalMode::Continuous { .. }) => Err(SignalError::WrongVariant {
            expected: "point",
            got: variant_name(signal),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("digit {digit} outside symbol set of size {symbols}")]
    UnknownDigit { digit: usize, symbols: usize },
    #[error("digit {0} assigned to both labels")]
    Duplicate(usize),
    #[error("digit {0} missing from pattern")]
    Missing(usize),
    #[error("pattern must cover at least one digit")]
    Empty,
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Total assignment of every digit `0..len` to a meaning label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DisplayPattern {
    labels: Vec<MeaningLabel>,
}

impl DisplayPattern {
    pub fn from_labels(labels: Vec<MeaningLabel>) -> Result<Self, PatternError> {
        if labels.is_empty() {
            return Err(PatternError::Empty);
        }
        Ok(Self { labels })
    }

    /// Builds a pattern where exactly the digits in `a_set` are labelled `A`.
    pub fn from_a_set(symbols: usize, a_set: &[usize]) -> Result<Self, PatternError> {
        if symbols == 0 {
            return Err(PatternError::Empty);
        }
        let mut labels = vec![MeaningLabel::B; symbols];
        for &digit in a_set {
            if digit >= symbols {
                return Err(PatternError::UnknownDigit { digit, symbols });
            }
            labels[digit] = MeaningLabel::A;
        }
        Ok(Self { labels })
    }

    /// Pattern from the low `symbols` bits of `mask`; bit `d` set means digit `d` is `A`.
    pub fn from_mask(symbols: usize, mask: u64) -> Self {
        assert!(symbols > 0 && symbols <= 64, "mask patterns support 1..=64 symbols");
        let labels = (0..symbols)
            .map(|d| {
                if mask >> d & 1 == 1 {
                    MeaningLabel::A
                } else {
                    MeaningLabel::B
                }
            })
            .collect();
        Self { labels }
    }

    pub fn uniform(symbols: usize, label: MeaningLabel) -> Self {
        Self {
            labels: vec![label; symbols],
        }
    }

    pub fn symbols(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[MeaningLabel] {
        &self.labels
    }

    pub fn label(&self, digit: usize) -> Result<MeaningLabel, PatternError> {
        self.labels
            .get(digit)
            .copied()
            .ok_or(PatternError::UnknownDigit {
                digit,
                symbols: self.labels.len(),
            })
    }

    pub fn complement(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| l.complement()).collect(),
        }
    }

    pub fn digits_with(&self, label: MeaningLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(d, _)| d)
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, WireError> {
        serde_json::from_str(text).map_err(WireError::from)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pattern serialization is infallible")
    }
}

/// Free-function form of [`DisplayPattern::label`].
pub fn pattern_label(pattern: &DisplayPattern, digit: usize) -> Result<MeaningLabel, PatternError> {
    pattern.label(digit)
}

pub fn complement_pattern(pattern: &DisplayPattern) -> DisplayPattern {
    pattern.complement()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternWire {
    #[serde(rename = "A")]
    a: Vec<usize>,
    #[serde(rename = "B")]
    b: Vec<usize>,
}

impl Serialize for DisplayPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PatternWire {
            a: self.digits_with(MeaningLabel::A),
            b: self.digits_with(MeaningLabel::B),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DisplayPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = PatternWire::deserialize(deserializer)?;
        let symbols = wire.a.len() + wire.b.len();
        if symbols == 0 {
            return Err(D::Error::custom(PatternError::Empty));
        }
        let mut labels: Vec<Option<MeaningLabel>> = vec![None; symbols];
        let mut seen = BTreeSet::new();
        for (list, label) in [(&wire.a, MeaningLabel::A), (&wire.b, MeaningLabel::B)] {
            for &digit in list {
                if digit >= symbols {
                    return Err(D::Error::custom(PatternError::UnknownDigit { digit, symbols }));
                }
                if !seen.insert(digit) {
                    return Err(D::Error::custom(PatternError::Duplicate(digit)));
                }
                labels[digit] = Some(label);
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(d, l)| l.ok_or(PatternError::Missing(d)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        Ok(DisplayPattern { labels })
    }
}
