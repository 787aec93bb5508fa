//! Two-class probabilistic classifiers and leave-one-out consistency scoring.
//!
//! Two model families are supported, selected by the signal variant of the
//! training data:
//!
//! * **Categorical** for button presses: Laplace-smoothed per-symbol label
//!   frequencies.
//! * **Gaussian** for feature vectors: one mean per class, a single diagonal
//!   variance pooled across both classes and floored at a ridge value, and
//!   empirical class priors.
//!
//! A model trained on a single class carries no information about the other
//! and predicts 0.5 everywhere.
//!
//! All arithmetic that could distinguish the two classes is done through the
//! same code path for each class, so swapping `A` and `B` throughout a dataset
//! yields bit-identical scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{MeaningLabel, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Floor on every pooled variance component.
    pub ridge: f64,
    /// Laplace pseudo-count for the categorical model.
    pub laplace: f64,
    /// Gaussian posteriors are clamped to `[clamp, 1 - clamp]`.
    pub clamp: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            laplace: 1.0,
            clamp: 1e-12,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ok = self.ridge > 0.0
            && self.ridge.is_finite()
            && self.laplace > 0.0
            && self.laplace.is_finite()
            && self.clamp > 0.0
            && self.clamp < 0.5;
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::InvalidConfig(*self))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{signals} signals but {labels} labels")]
    LengthMismatch { signals: usize, labels: usize },
    #[error("signal {index} does not match the variant/dimension of signal 0")]
    Heterogeneous { index: usize },
    #[error("signal is incompatible with the model")]
    IncompatibleSignal,
    #[error("invalid classifier config {0:?}")]
    InvalidConfig(ClassifierConfig),
}

/// Signals paired with meaning labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    signals: Vec<Signal>,
    labels: Vec<MeaningLabel>,
}

fn same_shape(a: &Signal, b: &Signal) -> bool {
    match (a, b) {
        (Signal::Discrete(_), Signal::Discrete(_)) => true,
        (Signal::Continuous(x), Signal::Continuous(y)) => x.len() == y.len(),
        _ => false,
    }
}

impl LabeledDataset {
    pub fn new(signals: Vec<Signal>, labels: Vec<MeaningLabel>) -> Result<Self, ClassifierError> {
        if signals.len() != labels.len() {
            return Err(ClassifierError::LengthMismatch {
                signals: signals.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = signals.first() {
            if let Some(index) = signals.iter().position(|s| !same_shape(first, s)) {
                return Err(ClassifierError::Heterogeneous { index });
            }
        }
        Ok(Self { signals, labels })
    }

    pub fn empty() -> Self {
        Self {
            signals: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Appends one pair; the signal must match the shape of those already present.
    pub fn push(&mut self, signal: Signal, label: MeaningLabel) -> Result<(), ClassifierError> {
        if let Some(first) = self.signals.first() {
            if !same_shape(first, &signal) {
                return Err(ClassifierError::Heterogeneous {
                    index: self.signals.len(),
                });
            }
        }
        self.signals.push(signal);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn labels(&self) -> &[MeaningLabel] {
        &self.labels
    }

    pub fn complemented(&self) -> Self {
        Self {
            signals: self.signals.clone(),
            labels: self.labels.iter().map(|l| l.complement()).collect(),
        }
    }

    pub fn without(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.signals.remove(index);
        out.labels.remove(index);
        out
    }
}

fn class_index(label: MeaningLabel) -> usize {
    match label {
        MeaningLabel::A => 0,
        MeaningLabel::B => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalModel {
    /// Per button: observed count of `[A, B]` labels.
    pub counts: BTreeMap<u32, [u64; 2]>,
    pub class_counts: [u64; 2],
    pub laplace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    /// Class means indexed `[A, B]`; `None` when the class was absent.
    pub means: [Option<Vec<f64>>; 2],
    pub variance: Vec<f64>,
    pub class_counts: [u64; 2],
    pub clamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierModel {
    Categorical(CategoricalModel),
    Gaussian(GaussianModel),
}

impl GaussianModel {
    /// Builds a model from explicit parameters. Priors are given as class counts.
    pub fn from_parameters(
        mean_a: Vec<f64>,
        mean_b: Vec<f64>,
        variance: Vec<f64>,
        class_counts: [u64; 2],
        clamp: f64,
    ) -> Self {
        assert_eq!(mean_a.len(), variance.len());
        assert_eq!(mean_b.len(), variance.len());
        Self {
            means: [Some(mean_a), Some(mean_b)],
            variance,
            class_counts,
            clamp,
        }
    }

    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        let mean = self.means[class].as_ref().expect("informed model");
        let n = (self.class_counts[0] + self.class_counts[1]) as f64;
        let prior = self.class_counts[class] as f64 / n;
        let mut quad = 0.0;
        for ((xj, mj), vj) in x.iter().zip(mean).zip(&self.variance) {
            let d = xj - mj;
            quad += d * d / vj;
        }
        prior.ln() - 0.5 * quad
    }

    fn label_prob(&self, x: &[f64], label: MeaningLabel) -> f64 {
        if self.means[0].is_none() || self.means[1].is_none() {
            return 0.5;
        }
        let own = class_index(label);
        let diff = self.log_joint(1 - own, x) - self.log_joint(own, x);
        let p = 1.0 / (1.0 + diff.exp());
        p.clamp(self.clamp, 1.0 - self.clamp)
    }
}

impl CategoricalModel {
    fn label_prob(&self, button: u32, label: MeaningLabel) -> f64 {
        if self.class_counts[0] == 0 || self.class_counts[1] == 0 {
            return 0.5;
        }
        let [ca, cb] = self.counts.get(&button).copied().unwrap_or([0, 0]);
        let own = [ca, cb][class_index(label)] as f64;
        (own + self.laplace) / ((ca + cb) as f64 + 2.0 * self.laplace)
    }
}

impl ClassifierModel {
    /// Whether both classes were observed at fit time.
    pub fn is_informed(&self) -> bool {
        let counts = match self {
            ClassifierModel::Categorical(m) => m.class_counts,
            ClassifierModel::Gaussian(m) => m.class_counts,
        };
        counts[0] > 0 && counts[1] > 0
    }

    /// Probability that `signal` means `label`.
    pub fn label_prob(&self, signal: &Signal, label: MeaningLabel) -> Result<f64, ClassifierError> {
        match (self, signal) {
            (ClassifierModel::Categorical(m), Signal::Discrete(b)) => Ok(m.label_prob(*b, label)),
            (ClassifierModel::Gaussian(m), Signal::Continuous(x)) if x.len() == m.dim() => {
                Ok(m.label_prob(x, label))
            }
            _ => Err(ClassifierError::IncompatibleSignal),
        }
    }
}

pub fn fit(data: &LabeledDataset, config: &ClassifierConfig) -> Result<ClassifierModel, ClassifierError> {
    config.validate()?;
    let first = data.signals.first().ok_or(ClassifierError::EmptyDataset)?;
    let mut class_counts = [0u64; 2];
    for &l in &data.labels {
        class_counts[class_index(l)] += 1;
    }
    match first {
        Signal::Discrete(_) => {
            let mut counts: BTreeMap<u32, [u64; 2]> = BTreeMap::new();
            for (s, &l) in data.signals.iter().zip(&data.labels) {
                let Signal::Discrete(b) = s else {
                    return Err(ClassifierError::IncompatibleSignal);
                };
                counts.entry(*b).or_default()[class_index(l)] += 1;
            }
            Ok(ClassifierModel::Categorical(CategoricalModel {
                counts,
                class_counts,
                laplace: config.laplace,
            }))
        }
        Signal::Continuous(x0) => {
            let stats = GaussianStats::collect(data, x0.len())?;
            Ok(ClassifierModel::Gaussian(stats.model(config)))
        }
    }
}

/// Probability of meaning `A` for `signal`.
pub fn predict_prob(model: &ClassifierModel, signal: &Signal) -> Result<f64, ClassifierError> {
    model.label_prob(signal, MeaningLabel::A)
}

/// Per-class sufficient statistics with class-centred sums of squares.
struct GaussianStats<'a> {
    points: Vec<&'a [f64]>,
    classes: Vec<usize>,
    counts: [u64; 2],
    means: [Vec<f64>; 2],
    /// Centred sum of squares per class and dimension.
    scatter: [Vec<f64>; 2],
}

impl<'a> GaussianStats<'a> {
    fn collect(data: &'a LabeledDataset, dim: usize) -> Result<Self, ClassifierError> {
        let mut points = Vec::with_capacity(data.len());
        for s in &data.signals {
            match s {
                Signal::Continuous(x) if x.len() == dim => points.push(x.as_slice()),
                _ => return Err(ClassifierError::IncompatibleSignal),
            }
        }
        let classes: Vec<usize> = data.labels.iter().map(|&l| class_index(l)).collect();
        Ok(Self::from_points(points, classes, dim))
    }

    fn from_points(points: Vec<&'a [f64]>, classes: Vec<usize>, dim: usize) -> Self {
        let mut counts = [0u64; 2];
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        for (x, &c) in points.iter().zip(&classes) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x.iter()) {
                *s += v;
            }
        }
        let means = [0, 1].map(|c| {
            let n = counts[c].max(1) as f64;
            sums[c].iter().map(|s| s / n).collect::<Vec<_>>()
        });
        let mut scatter = [vec![0.0; dim], vec![0.0; dim]];
        for (x, &c) in points.iter().zip(&classes) {
            for j in 0..dim {
                let d = x[j] - means[c][j];
                scatter[c][j] += d * d;
            }
        }
        Self {
            points,
            classes,
            counts,
            means,
            scatter,
        }
    }

    fn model(&self, config: &ClassifierConfig) -> GaussianModel {
        let n = (self.counts[0] + self.counts[1]) as f64;
        let variance = self.scatter[0]
            .iter()
            .zip(&self.scatter[1])
            .map(|(a, b)| ((a + b) / n).max(config.ridge))
            .collect();
        let means = [0, 1].map(|c| (self.counts[c] > 0).then(|| self.means[c].clone()));
        GaussianModel {
            means,
            variance,
            class_counts: self.counts,
            clamp: config.clamp,
        }
    }

    /// The model obtained by refitting without point `i`, via downdated statistics.
    fn fold_model(&self, i: usize, config: &ClassifierConfig) -> GaussianModel {
        let c = self.classes[i];
        let x = self.points[i];
        let mut counts = self.counts;
        counts[c] -= 1;
        let mut means = [Some(self.means[0].clone()), Some(self.means[1].clone())];
        let mut scatter = self.scatter.clone();
        if counts[c] == 0 {
            means[c] = None;
            scatter[c].iter_mut().for_each(|v| *v = 0.0);
        } else {
            let before = self.counts[c] as f64;
            let after = counts[c] as f64;
            let mean = means[c].as_mut().expect("class present");
            for j in 0..x.len() {
                let d = x[j] - self.means[c][j];
                mean[j] = (self.means[c][j] * before - x[j]) / after;
                scatter[c][j] = (scatter[c][j] - d * d * before / after).max(0.0);
            }
        }
        if counts[1 - c] == 0 {
            means[1 - c] = None;
        }
        let n = (counts[0] + counts[1]) as f64;
        let pooled: Vec<f64> = scatter[0].iter().zip(&scatter[1]).map(|(a, b)| (a + b) / n).collect();
        // Near-degenerate folds amplify rounding in the downdated statistics
        // by 1/variance; those are refit from the remaining points instead.
        let ill_conditioned = pooled.iter().enumerate().any(|(j, &v)| {
            let before = self.scatter[0][j] + self.scatter[1][j];
            v < REFIT_BELOW_RIDGE * config.ridge || v * n < CANCELLATION_LIMIT * before
        });
        if ill_conditioned {
            return self.refit_without(i, config);
        }
        let variance = pooled.into_iter().map(|v| v.max(config.ridge)).collect();
        GaussianModel {
            means,
            variance,
            class_counts: counts,
            clamp: config.clamp,
        }
    }

    fn refit_without(&self, i: usize, config: &ClassifierConfig) -> GaussianModel {
        let points = (0..self.points.len()).filter(|&j| j != i).map(|j| self.points[j]).collect();
        let classes = (0..self.classes.len()).filter(|&j| j != i).map(|j| self.classes[j]).collect();
        let fold = GaussianStats::from_points(points, classes, self.points[i].len());
        fold.model(config)
    }
}

/// Fold variances below this multiple of the ridge floor are refit exactly.
const REFIT_BELOW_RIDGE: f64 = 1e3;
/// Refit when downdating cancels more than this share of the scatter.
const CANCELLATION_LIMIT: f64 = 1e-3;

/// The model for leave-one-out fold `index`: the classifier trained on every
/// sample except `index`.
pub fn fold_model(
    data: &LabeledDataset,
    index: usize,
    config: &ClassifierConfig,
) -> Result<ClassifierModel, ClassifierError> {
    config.validate()?;
    let first = data.signals.first().ok_or(ClassifierError::EmptyDataset)?;
    assert!(index < data.len(), "fold index out of range");
    match first {
        Signal::Discrete(_) => {
            let ClassifierModel::Categorical(mut m) = fit(data, config)? else {
                unreachable!("discrete data fits a categorical model")
            };
            let Signal::Discrete(b) = data.signals[index] else {
                return Err(ClassifierError::IncompatibleSignal);
            };
            let c = class_index(data.labels[index]);
            m.class_counts[c] -= 1;
            let entry = m.counts.get_mut(&b).expect("held-out symbol counted");
            entry[c] -= 1;
            if entry[0] + entry[1] == 0 {
                m.counts.remove(&b);
            }
            Ok(ClassifierModel::Categorical(m))
        }
        Signal::Continuous(x0) => {
            let stats = GaussianStats::collect(data, x0.len())?;
            Ok(ClassifierModel::Gaussian(stats.fold_model(index, config)))
        }
    }
}

/// Mean leave-one-out log-probability of each held-out label.
///
/// Higher (closer to zero) means the labelling is more self-consistent.
/// Folds are computed from downdated class statistics, which agree with a
/// from-scratch refit up to floating-point rounding; near-degenerate folds
/// are refit directly.
pub fn loo_log_score(data: &LabeledDataset, config: &ClassifierConfig) -> Result<f64, ClassifierError> {
    config.validate()?;
    let first = data.signals.first().ok_or(ClassifierError::EmptyDataset)?;
    let n = data.len();
    let mut total = 0.0;
    match first {
        Signal::Discrete(_) => {
            let ClassifierModel::Categorical(m) = fit(data, config)? else {
                unreachable!("discrete data fits a categorical model")
            };
            for (s, &l) in data.signals.iter().zip(&data.labels) {
                let Signal::Discrete(b) = s else {
                    return Err(ClassifierError::IncompatibleSignal);
                };
                let c = class_index(l);
                let mut class_counts = m.class_counts;
                class_counts[c] -= 1;
                let p = if class_counts[0] == 0 || class_counts[1] == 0 {
                    0.5
                } else {
                    let mut counts = m.counts[b];
                    counts[c] -= 1;
                    (counts[c] as f64 + m.laplace) / ((counts[0] + counts[1]) as f64 + 2.0 * m.laplace)
                };
                total += p.ln();
            }
        }
        Signal::Continuous(x0) => {
            let stats = GaussianStats::collect(data, x0.len())?;
            for i in 0..n {
                let model = stats.fold_model(i, config);
                total += model.label_prob(stats.points[i], data.labels[i]).ln();
            }
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use MeaningLabel::{A, B};

    fn pt(x: f64, y: f64) -> Signal {
        Signal::Continuous(vec![x, y])
    }

    fn cfg() -> ClassifierConfig {
        ClassifierConfig::default()
    }

    #[test]
    fn two_point_fit_hits_ridge_floor() {
        let data = LabeledDataset::new(vec![pt(0.0, 0.0), pt(4.0, 0.0)], vec![A, B]).unwrap();
        let ClassifierModel::Gaussian(m) = fit(&data, &cfg()).unwrap() else {
            panic!("expected gaussian");
        };
        assert_eq!(m.means[0].as_deref(), Some(&[0.0, 0.0][..]));
        assert_eq!(m.means[1].as_deref(), Some(&[4.0, 0.0][..]));
        assert_eq!(m.variance, vec![1e-6, 1e-6]);
    }

    #[test]
    fn sampled_means_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut signals = Vec::new();
        let mut labels = Vec::new();
        for (cx, label) in [(0.0, A), (4.0, B)] {
            for _ in 0..100 {
                signals.push(pt(cx + noise.sample(&mut rng), noise.sample(&mut rng)));
                labels.push(label);
            }
        }
        let data = LabeledDataset::new(signals, labels).unwrap();
        let ClassifierModel::Gaussian(m) = fit(&data, &cfg()).unwrap() else {
            panic!("expected gaussian");
        };
        let tol = 3.0 / 10.0;
        let ma = m.means[0].as_ref().unwrap();
        let mb = m.means[1].as_ref().unwrap();
        assert!((ma[0] - 0.0).abs() < tol && ma[1].abs() < tol, "{ma:?}");
        assert!((mb[0] - 4.0).abs() < tol && mb[1].abs() < tol, "{mb:?}");
    }

    #[test]
    fn laplace_smoothed_frequency() {
        let data = LabeledDataset::new(
            vec![Signal::Discrete(0); 4],
            vec![A, A, A, B],
        )
        .unwrap();
        let model = fit(&data, &cfg()).unwrap();
        let p = predict_prob(&model, &Signal::Discrete(0)).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        // unseen button carries no evidence
        assert_eq!(predict_prob(&model, &Signal::Discrete(7)).unwrap(), 0.5);
    }

    fn unit_model() -> ClassifierModel {
        ClassifierModel::Gaussian(GaussianModel::from_parameters(
            vec![0.0, 0.0],
            vec![4.0, 0.0],
            vec![1.0, 1.0],
            [5, 5],
            1e-12,
        ))
    }

    #[test]
    fn midpoint_is_uninformative() {
        assert_eq!(predict_prob(&unit_model(), &pt(2.0, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn posterior_at_class_mean_matches_closed_form() {
        // log-odds = ((0-4)^2 - 0^2) / (2 * 1) = 8
        let expected = 1.0 / (1.0 + (-8.0f64).exp());
        let p = predict_prob(&unit_model(), &pt(0.0, 0.0)).unwrap();
        assert!((p - expected).abs() < 1e-15);
        assert!(p > 0.99);
    }

    #[test]
    fn single_class_model_is_uninformed() {
        let data = LabeledDataset::new(vec![pt(0.0, 0.0), pt(1.0, 3.0)], vec![B, B]).unwrap();
        let model = fit(&data, &cfg()).unwrap();
        assert!(!model.is_informed());
        for q in [pt(0.0, 0.0), pt(-9.0, 9.0), pt(100.0, 0.0)] {
            assert_eq!(predict_prob(&model, &q).unwrap(), 0.5);
        }
        let buttons = LabeledDataset::new(vec![Signal::Discrete(0)], vec![A]).unwrap();
        assert_eq!(
            predict_prob(&fit(&buttons, &cfg()).unwrap(), &Signal::Discrete(0)).unwrap(),
            0.5
        );
    }

    #[test]
    fn gaussian_posterior_is_clamped() {
        let p = predict_prob(&unit_model(), &pt(-1e6, 0.0)).unwrap();
        assert_eq!(p, 1.0 - 1e-12);
        let q = predict_prob(&unit_model(), &pt(1e6, 0.0)).unwrap();
        assert_eq!(q, 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            fit(&LabeledDataset::empty(), &cfg()),
            Err(ClassifierError::EmptyDataset)
        );
        assert_eq!(
            loo_log_score(&LabeledDataset::empty(), &cfg()),
            Err(ClassifierError::EmptyDataset)
        );
        assert_eq!(
            LabeledDataset::new(vec![pt(0.0, 0.0)], vec![]),
            Err(ClassifierError::LengthMismatch {
                signals: 1,
                labels: 0
            })
        );
        assert_eq!(
            LabeledDataset::new(vec![pt(0.0, 0.0), Signal::Discrete(1)], vec![A, B]),
            Err(ClassifierError::Heterogeneous { index: 1 })
        );
        assert_eq!(
            predict_prob(&unit_model(), &Signal::Discrete(0)),
            Err(ClassifierError::IncompatibleSignal)
        );
        assert_eq!(
            predict_prob(&unit_model(), &Signal::Continuous(vec![0.0])),
            Err(ClassifierError::IncompatibleSignal)
        );
        let bad = ClassifierConfig {
            ridge: 0.0,
            ..cfg()
        };
        let data = LabeledDataset::new(vec![pt(0.0, 0.0)], vec![A]).unwrap();
        assert!(matches!(fit(&data, &bad), Err(ClassifierError::InvalidConfig(_))));
    }

    #[test]
    fn single_sample_scores_log_half() {
        let data = LabeledDataset::new(vec![pt(3.0, 1.0)], vec![A]).unwrap();
        assert_eq!(loo_log_score(&data, &cfg()).unwrap(), 0.5f64.ln());
        let data = LabeledDataset::new(vec![Signal::Discrete(1)], vec![B]).unwrap();
        assert_eq!(loo_log_score(&data, &cfg()).unwrap(), 0.5f64.ln());
    }

    fn clusters(seed: u64, per_class: usize, sigma: f64, sep: f64) -> (Vec<Signal>, Vec<MeaningLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut signals = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per_class {
            let label = if i % 2 == 0 { A } else { B };
            let cx = if label == A { 0.0 } else { sep };
            signals.push(pt(cx + noise.sample(&mut rng), noise.sample(&mut rng)));
            labels.push(label);
        }
        (signals, labels)
    }

    #[test]
    fn separated_clusters_score_high_and_shuffled_labels_score_near_half() {
        let (signals, labels) = clusters(5, 20, 1.0, 8.0);
        let good = LabeledDataset::new(signals.clone(), labels.clone()).unwrap();
        let score = loo_log_score(&good, &cfg()).unwrap();
        assert!(score > 0.9f64.ln(), "consistent score {score}");

        // average over several random permutations of the labels
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let mut shuffled = labels.clone();
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            let bad = LabeledDataset::new(signals.clone(), shuffled).unwrap();
            let s = loo_log_score(&bad, &cfg()).unwrap();
            assert!((s - 0.5f64.ln()).abs() <= 0.15, "shuffled score {s}");
        }
    }

    fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
        let continuous = (1usize..4, 1usize..13).prop_flat_map(|(dim, n)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n),
                prop::collection::vec(any::<bool>(), n),
            )
        });
        let discrete = (1usize..13).prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..3, n),
                prop::collection::vec(any::<bool>(), n),
            )
        });
        let label = |b: bool| if b { A } else { B };
        prop_oneof![
            continuous.prop_map(move |(xs, ls)| LabeledDataset::new(
                xs.into_iter().map(Signal::Continuous).collect(),
                ls.into_iter().map(label).collect()
            )
            .unwrap()),
            discrete.prop_map(move |(bs, ls)| LabeledDataset::new(
                bs.into_iter().map(Signal::Discrete).collect(),
                ls.into_iter().map(label).collect()
            )
            .unwrap()),
        ]
    }

    fn models_close(a: &ClassifierModel, b: &ClassifierModel) -> bool {
        match (a, b) {
            (ClassifierModel::Categorical(x), ClassifierModel::Categorical(y)) => x == y,
            (ClassifierModel::Gaussian(x), ClassifierModel::Gaussian(y)) => {
                let close = |u: &[f64], v: &[f64]| {
                    u.len() == v.len() && u.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + p.abs()))
                };
                x.class_counts == y.class_counts
                    && close(&x.variance, &y.variance)
                    && x.means.iter().zip(&y.means).all(|(m, n)| match (m, n) {
                        (Some(m), Some(n)) => close(m, n),
                        (None, None) => true,
                        _ => false,
                    })
            }
            _ => false,
        }
    }

    proptest! {
        #[test]
        fn label_symmetry_is_exact(data in dataset_strategy()) {
            let s = loo_log_score(&data, &cfg()).unwrap();
            let t = loo_log_score(&data.complemented(), &cfg()).unwrap();
            prop_assert!((s - t).abs() <= 1e-12, "{} vs {}", s, t);
        }

        #[test]
        fn order_invariance(data in dataset_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..data.len()).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let permuted = LabeledDataset::new(
                idx.iter().map(|&i| data.signals()[i].clone()).collect(),
                idx.iter().map(|&i| data.labels()[i]).collect(),
            ).unwrap();
            let s = loo_log_score(&data, &cfg()).unwrap();
            let t = loo_log_score(&permuted, &cfg()).unwrap();
            prop_assert!((s - t).abs() <= 1e-12, "{} vs {}", s, t);
        }

        #[test]
        fn fold_model_equals_refit(data in dataset_strategy()) {
            prop_assume!(data.len() >= 2);
            for i in 0..data.len() {
                let folded = fold_model(&data, i, &cfg()).unwrap();
                let refit = fit(&data.without(i), &cfg()).unwrap();
                prop_assert!(models_close(&folded, &refit), "fold {}: {:?} vs {:?}", i, folded, refit);
            }
        }

        #[test]
        fn posterior_monotone_toward_class_a(
            ma in -5.0f64..5.0, gap in 0.1f64..5.0, var in 0.01f64..4.0,
            offset in 0.0f64..15.0, step in 0.0f64..1.0,
        ) {
            // shared variance: P(A) falls along the axis from mu_A to mu_B,
            // so walking back toward mu_A from the B side never lowers it
            let mb = ma + gap;
            let q = ma + offset;
            let model = ClassifierModel::Gaussian(GaussianModel::from_parameters(
                vec![ma], vec![mb], vec![var], [3, 3], 1e-12,
            ));
            let closer = q + (ma - q) * step;
            let p0 = predict_prob(&model, &Signal::Continuous(vec![q])).unwrap();
            let p1 = predict_prob(&model, &Signal::Continuous(vec![closer])).unwrap();
            prop_assert!(p1 >= p0, "{} -> {}: {} < {}", q, closer, p1, p0);
        }
    }
}
