//! Synthetic users and seeded batch trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{CodeSession, Level, SessionConfig, SessionError, SessionEvent, SessionStatus, CODE_LENGTH};
use crate::signal::{DisplayPattern, MeaningLabel, Signal};

pub const DEFAULT_STEP_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserKind {
    /// Presses the button of the intended digit's color; `p_err` chance of the other one.
    Button { p_err: f64 },
    /// Clicks around one of two cluster centres, one per meaning.
    Gaussian2d {
        mu_a: [f64; 2],
        mu_b: [f64; 2],
        sigma: f64,
    },
    /// Ignores the display and clicks uniformly inside a box.
    RandomClicker { min: [f64; 2], max: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    #[serde(flatten)]
    pub kind: UserKind,
    /// The user privately swaps which action means which label.
    #[serde(default)]
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UserError {
    #[error("error rate must lie in [0, 1), got {0}")]
    ErrorRate(f64),
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("cluster centres must differ")]
    SameCentres,
    #[error("bounding box must have min < max on both axes")]
    EmptyBox,
}

impl UserModel {
    pub fn button(p_err: f64) -> Self {
        Self {
            kind: UserKind::Button { p_err },
            flipped: false,
        }
    }

    /// Clusters at `(-1, 0)` and `(1, 0)`.
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: UserKind::Gaussian2d {
                mu_a: [-1.0, 0.0],
                mu_b: [1.0, 0.0],
                sigma,
            },
            flipped: false,
        }
    }

    pub fn random_clicker() -> Self {
        Self {
            kind: UserKind::RandomClicker {
                min: [-2.0, -2.0],
                max: [2.0, 2.0],
            },
            flipped: false,
        }
    }

    pub fn flipped(mut self, flipped: bool) -> Self {
        self.flipped = flipped;
        self
    }

    pub fn validate(&self) -> Result<(), UserError> {
        match &self.kind {
            UserKind::Button { p_err } if !(0.0..1.0).contains(p_err) => Err(UserError::ErrorRate(*p_err)),
            UserKind::Gaussian2d { sigma, .. } if !(*sigma > 0.0 && sigma.is_finite()) => Err(UserError::Sigma(*sigma)),
            UserKind::Gaussian2d { mu_a, mu_b, .. } if mu_a == mu_b => Err(UserError::SameCentres),
            UserKind::RandomClicker { min, max } if !(min[0] < max[0] && min[1] < max[1]) => Err(UserError::EmptyBox),
            _ => Ok(()),
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            UserKind::Gaussian2d { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn p_err(&self) -> Option<f64> {
        match self.kind {
            UserKind::Button { p_err } => Some(p_err),
            _ => None,
        }
    }

    /// The level this user can play.
    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, UserKind::Button { .. })
    }
}

/// One user action in response to `pattern` while thinking of `digit`.
///
/// A flipped Gaussian user reflects its sample through the midpoint of the
/// two centres, so it consumes the same random draws as its unflipped twin.
pub fn gen_signal<R: Rng + ?Sized>(user: &UserModel, digit: usize, pattern: &DisplayPattern, rng: &mut R) -> Signal {
    let label = pattern.labels()[digit];
    match &user.kind {
        UserKind::Button { p_err } => {
            let mut pressed = if user.flipped { label.complement() } else { label };
            if *p_err > 0.0 && rng.random::<f64>() < *p_err {
                pressed = pressed.complement();
            }
            Signal::Discrete(pressed.button())
        }
        UserKind::Gaussian2d { mu_a, mu_b, sigma } => {
            let noise = Normal::new(0.0, *sigma).expect("validated sigma");
            let centre = if label == MeaningLabel::A { mu_a } else { mu_b };
            let x = centre[0] + noise.sample(rng);
            let y = centre[1] + noise.sample(rng);
            if user.flipped {
                Signal::Continuous(vec![(mu_a[0] + mu_b[0]) - x, (mu_a[1] + mu_b[1]) - y])
            } else {
                Signal::Continuous(vec![x, y])
            }
        }
        UserKind::RandomClicker { min, max } => {
            let x = rng.random_range(min[0]..max[0]);
            let y = rng.random_range(min[1]..max[1]);
            Signal::Continuous(vec![x, y])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub opened: bool,
    pub timeout: bool,
    pub steps_per_digit: Vec<usize>,
    pub accepted: Vec<usize>,
    pub wrong_acceptances: usize,
    pub total_signals: usize,
    /// Internal invariant breaches observed during the trial.
    pub violations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    User(#[from] UserError),
    #[error("user model does not produce signals for level {0}")]
    IncompatibleUser(u8),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Runs one session against `user`, who always intends the configured code.
pub fn run_trial<R: Rng + ?Sized>(
    config: &SessionConfig,
    user: &UserModel,
    step_cap: usize,
    rng: &mut R,
) -> Result<TrialResult, SimError> {
    user.validate()?;
    if user.is_continuous() != (config.level == Level::UnknownContinuous) {
        return Err(SimError::IncompatibleUser(config.level.number()));
    }
    let (mut session, mut pattern) = CodeSession::start(config.clone())?;
    let theta = config.engine.theta;
    let mut violations = Vec::new();
    let mut signals = 0;
    while !session.status().is_terminal() && signals < step_cap {
        let intended = config.code[session.accepted().len()];
        let signal = gen_signal(user, intended, &pattern, rng);
        let outcome = session.step(&signal)?;
        signals += 1;
        for event in &outcome.events {
            if let SessionEvent::DigitAccepted { digit, confidence, .. } = event {
                if *confidence < theta {
                    violations.push(format!("digit {digit} accepted at weight {confidence} < {theta}"));
                }
            }
        }
        if let Some(next) = outcome.next_pattern {
            pattern = next;
        }
    }
    let accepted = session.accepted().to_vec();
    let opened = session.status() == SessionStatus::Opened;
    if opened && accepted != config.code {
        violations.push(format!("vault opened with {accepted:?} != code"));
    }
    let wrong_acceptances = accepted.iter().zip(&config.code).filter(|(a, c)| a != c).count();
    Ok(TrialResult {
        opened,
        timeout: !session.status().is_terminal(),
        steps_per_digit: session.steps_per_digit().to_vec(),
        accepted,
        wrong_acceptances,
        total_signals: signals,
        violations,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds for trial `index`: `(session seed, user seed)`. Independent of the
/// batch cell, so twin users in different cells see identical streams.
pub fn trial_seeds(master: u64, index: u64) -> (u64, u64) {
    let base = splitmix64(master ^ splitmix64(index));
    (splitmix64(base), splitmix64(base ^ 0xA5A5_A5A5_A5A5_A5A5))
}

/// Trial `index` of a batch seeded by `master`.
pub fn run_seeded_trial(
    config: &SessionConfig,
    user: &UserModel,
    step_cap: usize,
    master: u64,
    index: u64,
) -> Result<TrialResult, SimError> {
    let (session_seed, user_seed) = trial_seeds(master, index);
    let mut config = config.clone();
    config.seed = session_seed;
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed);
    run_trial(&config, user, step_cap, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCell {
    pub config: SessionConfig,
    pub user: UserModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub level: u8,
    pub sigma: Option<f64>,
    pub p_err: Option<f64>,
    pub flipped: bool,
    pub trials: usize,
    pub open_rate: f64,
    pub median_steps_d1: Option<f64>,
    pub median_steps_d2: Option<f64>,
    pub median_steps_d3: Option<f64>,
    pub median_steps_d4: Option<f64>,
    /// Wrongly accepted digits per digit slot (`trials * 4`).
    pub wrong_accept_rate: f64,
    pub timeout_rate: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub step_cap: usize,
    pub cells: Vec<CellMetrics>,
}

pub fn median(values: &mut [usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid] as f64
    } else {
        (values[mid - 1] + values[mid]) as f64 / 2.0
    })
}

pub fn summarize(cell: &BatchCell, results: &[TrialResult]) -> CellMetrics {
    let trials = results.len();
    let n = trials as f64;
    let mut per_digit: Vec<Vec<usize>> = vec![Vec::new(); CODE_LENGTH];
    for r in results {
        for (i, &s) in r.steps_per_digit.iter().enumerate() {
            per_digit[i].push(s);
        }
    }
    let medians: Vec<Option<f64>> = per_digit.iter_mut().map(|v| median(v)).collect();
    CellMetrics {
        level: cell.config.level.number(),
        sigma: cell.user.sigma(),
        p_err: cell.user.p_err(),
        flipped: cell.user.flipped,
        trials,
        open_rate: results.iter().filter(|r| r.opened).count() as f64 / n,
        median_steps_d1: medians[0],
        median_steps_d2: medians[1],
        median_steps_d3: medians[2],
        median_steps_d4: medians[3],
        wrong_accept_rate: results.iter().map(|r| r.wrong_acceptances).sum::<usize>() as f64
            / (n * CODE_LENGTH as f64),
        timeout_rate: results.iter().filter(|r| r.timeout).count() as f64 / n,
        violations: results.iter().map(|r| r.violations.len()).sum(),
    }
}

/// Runs every trial of one cell; results are in trial order regardless of scheduling.
pub fn run_cell(cell: &BatchCell, trials: usize, seed: u64, step_cap: usize) -> Result<Vec<TrialResult>, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|i| run_seeded_trial(&cell.config, &cell.user, step_cap, seed, i))
        .collect()
}

pub fn run_batch(cells: &[BatchCell], trials: usize, seed: u64, step_cap: usize) -> Result<BatchReport, SimError> {
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let results = run_cell(cell, trials, seed, step_cap)?;
        out.push(summarize(cell, &results));
    }
    Ok(BatchReport {
        seed,
        step_cap,
        cells: out,
    })
}

impl BatchReport {
    pub fn to_csv(&self) -> Result<String, SimError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record([
            "level",
            "sigma",
            "p_err",
            "flipped",
            "trials",
            "open_rate",
            "median_steps_d1",
            "median_steps_d2",
            "median_steps_d3",
            "median_steps_d4",
            "wrong_accept_rate",
            "timeout_rate",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            writer.write_record([
                c.level.to_string(),
                opt(c.sigma),
                opt(c.p_err),
                c.flipped.to_string(),
                c.trials.to_string(),
                c.open_rate.to_string(),
                opt(c.median_steps_d1),
                opt(c.median_steps_d2),
                opt(c.median_steps_d3),
                opt(c.median_steps_d4),
                c.wrong_accept_rate.to_string(),
                c.timeout_rate.to_string(),
            ])?;
        }
        let bytes = writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn violations(&self) -> usize {
        self.cells.iter().map(|c| c.violations).sum()
    }
}
