//! Display-pattern planning and identifiability bookkeeping.
//!
//! Each digit accumulates the sequence of labels the displayed patterns gave
//! it. Two digits can only be told apart once their sequences differ, and when
//! the meaning of the user's signals is unknown, they must also not be exact
//! complements: relabelling every signal maps one hypothesis onto the other.
//!
//! Two digits are separated by `min(agree, differ)` steps under unknown
//! meanings (steps where their labels agreed or differed) and by `differ`
//! steps when meanings are known; a separation of zero is unresolved. A
//! separation of one is fragile, since a single noisy signal can make the
//! complement labelling look consistent, so the planner keeps widening it.
//! A digit whose labels have all been the same is also unresolved under
//! unknown meanings: its labelling is single-class and no classifier can be
//! judged on it. It is reported as the pair `(d, d)`, separated by
//! `min(#A, #B)`.
//!
//! The planner picks the next pattern by exhaustive search over all
//! bipartitions (for up to [`EXHAUSTIVE_LIMIT`] digits), ranking them by
//!
//! 1. both labels present among plausible digits,
//! 2. the number of pairs still unresolved after the pattern,
//! 3. the confusion mass `sum w_i * w_j * 2^-sep(i, j)` after the pattern,
//! 4. weight imbalance between the two labels,
//! 5. a seeded random choice among the remaining ties.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::signal::{DisplayPattern, MeaningLabel};

/// Largest symbol count searched exhaustively; larger sets use a greedy split.
pub const EXHAUSTIVE_LIMIT: usize = 16;

/// Weights below this are treated as ruled out when sizing the plausible set.
pub const PLAUSIBLE_FLOOR: f64 = 1e-30;

const KEY_SCALE: f64 = 1e9;

/// Which label-sequence relations leave two digits indistinguishable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Identical sequences only (signal meanings are known).
    Identity,
    /// Identical or exactly complementary sequences (meanings unknown).
    Complement,
}

/// Unordered digit pairs that the recorded patterns cannot yet separate. A
/// pair `(d, d)` marks a digit whose labelling is still single-class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedPairs {
    pairs: BTreeSet<(usize, usize)>,
}

impl UnresolvedPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    /// Whether `digit` belongs to any unresolved pair.
    pub fn involves(&self, digit: usize) -> bool {
        self.pairs.iter().any(|&(a, b)| a == digit || b == digit)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }
}

impl FromIterator<(usize, usize)> for UnresolvedPairs {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self {
            pairs: iter.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    sequences: Vec<Vec<MeaningLabel>>,
    plausible: Vec<bool>,
    symmetry: Symmetry,
}

/// Relation between two digits' label sequences so far. `a == b` describes a
/// single digit, counting its A labels as `agree` and B labels as `differ`.
#[derive(Clone, Copy)]
struct PairRelation {
    a: usize,
    b: usize,
    agree: usize,
    differ: usize,
}

impl PairRelation {
    fn separation(&self, symmetry: Symmetry) -> usize {
        match symmetry {
            Symmetry::Identity => self.differ,
            Symmetry::Complement => self.agree.min(self.differ),
        }
    }
}

impl PlannerState {
    pub fn new(symbols: usize, symmetry: Symmetry) -> Self {
        assert!(symbols >= 1, "planner needs at least one symbol");
        Self {
            sequences: vec![Vec::new(); symbols],
            plausible: vec![true; symbols],
            symmetry,
        }
    }

    pub fn symbols(&self) -> usize {
        self.sequences.len()
    }

    pub fn steps(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn sequence(&self, digit: usize) -> &[MeaningLabel] {
        &self.sequences[digit]
    }

    pub fn plausible(&self) -> &[bool] {
        &self.plausible
    }

    /// Replaces the plausible set. An empty set is ignored.
    pub fn with_plausible(mut self, plausible: Vec<bool>) -> Self {
        assert_eq!(plausible.len(), self.symbols());
        if plausible.iter().any(|&p| p) {
            self.plausible = plausible;
        }
        self
    }

    /// Plausible set derived from a weight vector.
    pub fn with_plausible_weights(self, weights: &[f64]) -> Self {
        let max = weights.iter().cloned().fold(0.0, f64::max);
        let plausible = weights
            .iter()
            .map(|&w| w >= PLAUSIBLE_FLOOR * max.max(f64::MIN_POSITIVE))
            .collect();
        self.with_plausible(plausible)
    }

    /// Appends each digit's label under `pattern`.
    pub fn record_pattern(&self, pattern: &DisplayPattern) -> PlannerState {
        assert_eq!(pattern.symbols(), self.symbols(), "pattern symbol count mismatch");
        let mut next = self.clone();
        for (seq, &label) in next.sequences.iter_mut().zip(pattern.labels()) {
            seq.push(label);
        }
        next
    }

    /// Pair relations, plus single-digit relations under complement symmetry.
    fn relations(&self, symmetry: Symmetry) -> Vec<PairRelation> {
        let n = self.symbols();
        let mut out = Vec::new();
        for a in 0..n {
            let first = if symmetry == Symmetry::Complement { a } else { a + 1 };
            for b in first..n {
                let (sa, sb) = (&self.sequences[a], &self.sequences[b]);
                let agree = if a == b {
                    sa.iter().filter(|&&l| l == MeaningLabel::A).count()
                } else {
                    sa.iter().zip(sb).filter(|(x, y)| x == y).count()
                };
                out.push(PairRelation {
                    a,
                    b,
                    agree,
                    differ: sa.len() - agree,
                });
            }
        }
        out
    }

    /// Pairs whose sequences are identical or exact complements.
    pub fn identifiability(&self) -> UnresolvedPairs {
        self.relations(Symmetry::Complement)
            .into_iter()
            .filter(|r| r.a != r.b && r.separation(Symmetry::Complement) == 0)
            .map(|r| (r.a, r.b))
            .collect()
    }

    /// Pairs unresolved under this planner's own symmetry. Under
    /// [`Symmetry::Complement`] this adds `(d, d)` for single-class digits.
    pub fn unresolved(&self) -> UnresolvedPairs {
        self.relations(self.symmetry)
            .into_iter()
            .filter(|r| r.separation(self.symmetry) == 0)
            .map(|r| (r.a, r.b))
            .collect()
    }

    /// Chooses the next pattern. `weights` is indexed by digit and need not be normalized.
    pub fn next_pattern<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> DisplayPattern {
        let n = self.symbols();
        assert_eq!(weights.len(), n, "one weight per digit");
        let total: f64 = (0..n).filter(|&d| self.plausible[d]).map(|d| weights[d]).sum();
        let plausible_count = self.plausible.iter().filter(|&&p| p).count();
        let w: Vec<f64> = (0..n)
            .map(|d| {
                if !self.plausible[d] {
                    0.0
                } else if total > 0.0 && total.is_finite() {
                    weights[d] / total
                } else {
                    1.0 / plausible_count as f64
                }
            })
            .collect();

        // Soft weights never rule a digit out under unknown meanings, so every
        // pair counts there; with known meanings only plausible pairs do.
        let relations: Vec<PairRelation> = self
            .relations(self.symmetry)
            .into_iter()
            .filter(|r| self.symmetry == Symmetry::Complement || (self.plausible[r.a] && self.plausible[r.b]))
            .collect();

        if n > EXHAUSTIVE_LIMIT {
            return self.greedy_pattern(&w, rng);
        }

        let mut best: Option<(u8, usize, i64, i64)> = None;
        let mut ties: Vec<u64> = Vec::new();
        for mask in 0u64..(1u64 << n) {
            let key = self.pattern_key(mask, &w, &relations, plausible_count);
            match best {
                Some(b) if key > b => {}
                Some(b) if key == b => ties.push(mask),
                _ => {
                    best = Some(key);
                    ties.clear();
                    ties.push(mask);
                }
            }
        }
        let mask = ties[rng.random_range(0..ties.len())];
        DisplayPattern::from_mask(n, mask)
    }

    fn pattern_key(
        &self,
        mask: u64,
        w: &[f64],
        relations: &[PairRelation],
        plausible_count: usize,
    ) -> (u8, usize, i64, i64) {
        let label_a = |d: usize| mask >> d & 1 == 1;
        let mut mass_a = 0.0;
        let mut mass_b = 0.0;
        let mut seen_a = false;
        let mut seen_b = false;
        for (d, &wd) in w.iter().enumerate() {
            if !self.plausible[d] {
                continue;
            }
            if label_a(d) {
                mass_a += wd;
                seen_a = true;
            } else {
                mass_b += wd;
                seen_b = true;
            }
        }
        let uncovered = u8::from(plausible_count >= 2 && !(seen_a && seen_b));
        let mut confusion = 0.0;
        let mut remaining = 0;
        for r in relations {
            let mut after = *r;
            let agrees = if r.a == r.b { label_a(r.a) } else { label_a(r.a) == label_a(r.b) };
            if agrees {
                after.agree += 1;
            } else {
                after.differ += 1;
            }
            let sep = after.separation(self.symmetry);
            if sep == 0 {
                remaining += 1;
            }
            confusion += w[r.a] * w[r.b] * 0.5f64.powi(sep.min(64) as i32);
        }
        (
            uncovered,
            remaining,
            (confusion * KEY_SCALE).round() as i64,
            ((mass_a - mass_b).abs() * KEY_SCALE).round() as i64,
        )
    }

    /// Weight-balanced greedy split for large symbol sets.
    fn greedy_pattern<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> DisplayPattern {
        let n = self.symbols();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
        let mut labels = vec![MeaningLabel::B; n];
        let (mut mass_a, mut mass_b) = (0.0, 0.0);
        let (mut count_a, mut count_b) = (0usize, 0usize);
        for d in order {
            let to_a = if mass_a != mass_b {
                mass_a < mass_b
            } else if count_a != count_b {
                count_a < count_b
            } else {
                rng.random::<bool>()
            };
            if to_a {
                labels[d] = MeaningLabel::A;
                mass_a += w[d];
                count_a += 1;
            } else {
                mass_b += w[d];
                count_b += 1;
            }
        }
        DisplayPattern::from_labels(labels).expect("non-empty symbol set")
    }
}
