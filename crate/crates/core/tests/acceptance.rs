//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p vault-core --test acceptance`. An optional
//! substring argument runs only the matching criteria.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vault_core::classifier::{loo_log_score, ClassifierConfig, LabeledDataset};
use vault_core::engine::{EngineParams, EngineState};
use vault_core::log::{replay_str, to_jsonl};
use vault_core::planner::{PlannerState, Symmetry};
use vault_core::session::{elimination_update, CodeSession, Level, SessionConfig};
use vault_core::signal::{DisplayPattern, MeaningLabel, Signal, SignalMode};
use vault_core::simulator::{gen_signal, run_seeded_trial, trial_seeds, TrialResult, UserKind, UserModel};

const STEP_CAP: usize = 200;
const MASTER_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_code(rng: &mut impl Rng) -> Vec<usize> {
    (0..4).map(|_| rng.random_range(0..10)).collect()
}

fn random_pattern(rng: &mut impl Rng) -> DisplayPattern {
    DisplayPattern::from_mask(10, rng.random_range(0..1024))
}

fn level5(code: Vec<usize>) -> SessionConfig {
    SessionConfig::new(Level::UnknownContinuous, code, 0)
}

/// Trial `i` with a code drawn from the trial's own seed.
fn trial(user: &UserModel, i: u64) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seeds(MASTER_SEED, i).0 ^ 0x5EED);
    let config = level5(random_code(&mut rng));
    run_seeded_trial(&config, user, STEP_CAP, MASTER_SEED, i).expect("trial runs")
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    }
}

fn complement_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut argmax_mismatch = 0;
    for h in 0..200 {
        let discrete = h % 2 == 0;
        let mode = if discrete {
            SignalMode::Discrete { buttons: 2 }
        } else {
            SignalMode::Continuous { dim: 2 }
        };
        let mut plain = EngineState::new(10, mode, EngineParams::default()).unwrap();
        let mut flipped = plain.clone();
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..rng.random_range(1..=30) {
            let pattern = random_pattern(&mut rng);
            let signal = if discrete {
                Signal::Discrete(rng.random_range(0..2))
            } else {
                Signal::Continuous(vec![normal.sample(&mut rng), normal.sample(&mut rng)])
            };
            plain = plain.ingest(&pattern, &signal).unwrap();
            flipped = flipped.ingest(&pattern.complement(), &signal).unwrap();
        }
        let (a, b) = (plain.scores().unwrap(), flipped.scores().unwrap());
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
        let argmax = |s: &[f64]| s.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).map(|p| p.0);
        if argmax(a) != argmax(b) {
            argmax_mismatch += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && argmax_mismatch == 0 && secs < 10.0,
        format!("200 histories, max |score diff| {worst:e}, argmax mismatches {argmax_mismatch}, {secs:.2} s"),
    )
}

fn flip_equivalence() -> Outcome {
    let plain = UserModel::gaussian(0.25);
    let flipped = plain.clone().flipped(true);
    let mut differing = 0;
    for i in 0..500 {
        let (a, b) = (trial(&plain, i), trial(&flipped, i));
        if a.steps_per_digit != b.steps_per_digit || a.accepted != b.accepted {
            differing += 1;
        }
    }
    outcome(
        differing == 0,
        format!("500 trial pairs, {differing} with differing per-digit step counts"),
    )
}

/// Label sequences of every digit as bit codes; bit `j` set means label A at step `j`.
fn sequences_from_codes(codes: &[u32], steps: usize) -> Vec<DisplayPattern> {
    (0..steps)
        .map(|j| {
            let a: Vec<usize> = (0..codes.len()).filter(|&d| codes[d] >> j & 1 == 1).collect();
            DisplayPattern::from_a_set(codes.len(), &a).unwrap()
        })
        .collect()
}

/// Every multiset of 10 codes drawn from `2^steps` values, in non-decreasing order.
fn for_each_code_multiset(steps: usize, f: &mut impl FnMut(&[u32])) {
    fn rec(codes: &mut Vec<u32>, from: u32, limit: u32, f: &mut impl FnMut(&[u32])) {
        if codes.len() == 10 {
            f(codes);
            return;
        }
        for c in from..limit {
            codes.push(c);
            rec(codes, c, limit, f);
            codes.pop();
        }
    }
    rec(&mut Vec::with_capacity(10), 0, 1 << steps, f);
}

fn identifiability_bound() -> Outcome {
    // Identifiability only depends on the multiset of per-digit label
    // sequences, so enumerating code multisets covers every pattern sequence
    // up to a relabelling of the digits.
    let mut checked = 0u64;
    let mut empty_found = 0u64;
    for steps in 1..=4 {
        for_each_code_multiset(steps, &mut |codes| {
            let ps = sequences_from_codes(codes, steps)
                .iter()
                .fold(PlannerState::new(10, Symmetry::Complement), |ps, p| ps.record_pattern(p));
            checked += 1;
            if ps.identifiability().is_empty() {
                empty_found += 1;
            }
        });
    }

    let user = UserModel::gaussian(0.25);
    let mut within = 0;
    let mut too_early = 0;
    let mut at_step = [0usize; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    for i in 0..1000u64 {
        let (session_seed, user_seed) = trial_seeds(MASTER_SEED, i);
        let code = random_code(&mut rng);
        let mut config = level5(code.clone());
        config.seed = session_seed;
        let (mut session, mut pattern) = CodeSession::start(config).unwrap();
        let mut user_rng = ChaCha8Rng::seed_from_u64(user_seed);
        let mut resolved_at = None;
        for k in 1..=8 {
            let signal = gen_signal(&user, code[0], &pattern, &mut user_rng);
            let out = session.step(&signal).unwrap();
            if !session.accepted().is_empty() {
                break;
            }
            if session.planner().unresolved().is_empty() {
                resolved_at = Some(k);
                break;
            }
            pattern = out.next_pattern.unwrap();
        }
        match resolved_at {
            Some(k) if k < 5 => too_early += 1,
            Some(k) => {
                within += 1;
                at_step[k - 5] += 1;
            }
            None => {}
        }
    }
    let rate = within as f64 / 1000.0;
    outcome(
        empty_found == 0 && too_early == 0 && rate >= 0.99,
        format!(
            "{checked} sequence classes of length <= 4 all unresolved ({empty_found} empty); \
             resolved within 5..=8 steps in {within}/1000 runs (by step 5/6/7/8: {at_step:?}), {too_early} before step 5"
        ),
    )
}

fn truth_recovery() -> Outcome {
    let user = UserModel::gaussian(0.25);
    let results: Vec<TrialResult> = (0..1000).map(|i| trial(&user, i)).collect();
    let opened = results.iter().filter(|r| r.opened).count();
    let wrong: usize = results.iter().map(|r| r.wrong_acceptances).sum();
    let violations: usize = results.iter().map(|r| r.violations.len()).sum();
    let medians: Vec<f64> = (0..4)
        .map(|d| median(results.iter().filter_map(|r| r.steps_per_digit.get(d).copied()).collect()))
        .collect();
    let transfer_ok = medians[1..].iter().all(|&m| medians[0] >= m);
    outcome(
        opened == 1000 && wrong == 0 && violations == 0 && transfer_ok,
        format!("opened {opened}/1000, wrong digits {wrong}, violations {violations}, median steps per digit {medians:?}"),
    )
}

fn adversarial_soundness() -> Outcome {
    let user = UserModel::random_clicker();
    let results: Vec<TrialResult> = (0..1000).map(|i| trial(&user, i)).collect();
    let wrong: usize = results.iter().map(|r| r.wrong_acceptances).sum();
    let rate = wrong as f64 / 4000.0;
    let unsound = results.iter().filter(|r| r.opened && r.wrong_acceptances > 0).count();
    let violations: usize = results.iter().map(|r| r.violations.len()).sum();
    let opened = results.iter().filter(|r| r.opened).count();
    outcome(
        rate <= 0.01 && unsound == 0 && violations == 0,
        format!(
            "wrong-digit rate {rate:.4} ({wrong}/4000), unsound opens {unsound}, violations {violations}, \
             random open rate {:.4}",
            opened as f64 / 1000.0
        ),
    )
}

/// Brute-force LOO: refit every fold from scratch with textbook formulas.
fn oracle_loo(signals: &[Signal], labels: &[MeaningLabel], cfg: &ClassifierConfig) -> f64 {
    let n = signals.len();
    let mut total = 0.0;
    for i in 0..n {
        let train: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let in_class = |c: MeaningLabel| train.iter().copied().filter(move |&j| labels[j] == c);
        let count_a = in_class(MeaningLabel::A).count();
        let count_b = in_class(MeaningLabel::B).count();
        let p_own = if count_a == 0 || count_b == 0 {
            0.5
        } else {
            match &signals[i] {
                Signal::Discrete(b) => {
                    let hits = |c| in_class(c).filter(|&j| signals[j] == Signal::Discrete(*b)).count() as f64;
                    let (ha, hb) = (hits(MeaningLabel::A), hits(MeaningLabel::B));
                    let own = if labels[i] == MeaningLabel::A { ha } else { hb };
                    (own + cfg.laplace) / (ha + hb + 2.0 * cfg.laplace)
                }
                Signal::Continuous(x) => {
                    let dim = x.len();
                    let point = |j: usize| match &signals[j] {
                        Signal::Continuous(v) => v.clone(),
                        _ => unreachable!(),
                    };
                    let mean = |c: MeaningLabel| {
                        let members: Vec<usize> = in_class(c).collect();
                        (0..dim)
                            .map(|k| members.iter().map(|&j| point(j)[k]).sum::<f64>() / members.len() as f64)
                            .collect::<Vec<f64>>()
                    };
                    let (ma, mb) = (mean(MeaningLabel::A), mean(MeaningLabel::B));
                    let var: Vec<f64> = (0..dim)
                        .map(|k| {
                            let ss: f64 = train
                                .iter()
                                .map(|&j| {
                                    let m = if labels[j] == MeaningLabel::A { &ma } else { &mb };
                                    (point(j)[k] - m[k]).powi(2)
                                })
                                .sum();
                            (ss / train.len() as f64).max(cfg.ridge)
                        })
                        .collect();
                    let log_density = |m: &[f64], prior: f64| {
                        prior.ln()
                            + (0..dim)
                                .map(|k| {
                                    -0.5 * (2.0 * std::f64::consts::PI * var[k]).ln()
                                        - (x[k] - m[k]).powi(2) / (2.0 * var[k])
                                })
                                .sum::<f64>()
                    };
                    let la = log_density(&ma, count_a as f64 / train.len() as f64);
                    let lb = log_density(&mb, count_b as f64 / train.len() as f64);
                    let top = la.max(lb);
                    let evidence = top + ((la - top).exp() + (lb - top).exp()).ln();
                    let own = if labels[i] == MeaningLabel::A { la } else { lb };
                    (own - evidence).exp().clamp(cfg.clamp, 1.0 - cfg.clamp)
                }
            }
        };
        total += p_own.ln();
    }
    total / n as f64
}

fn loo_oracle() -> Outcome {
    let cfg = ClassifierConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    let mut datasets = 0;
    for k in 0..200 {
        let n = rng.random_range(1..=12);
        let dim = rng.random_range(1..=3);
        let discrete = k % 2 == 0;
        let mut signals: Vec<Signal> = Vec::new();
        for _ in 0..n {
            let s = if discrete {
                Signal::Discrete(rng.random_range(0..3))
            } else if !signals.is_empty() && rng.random_bool(0.15) {
                signals[rng.random_range(0..signals.len())].clone()
            } else {
                Signal::Continuous((0..dim).map(|_| normal.sample(&mut rng) * 2.0).collect())
            };
            signals.push(s);
        }
        let labels: Vec<MeaningLabel> = (0..n)
            .map(|_| if rng.random_bool(0.5) { MeaningLabel::A } else { MeaningLabel::B })
            .collect();
        let got = loo_log_score(&LabeledDataset::new(signals.clone(), labels.clone()).unwrap(), &cfg).unwrap();
        let want = oracle_loo(&signals, &labels, &cfg);
        worst = worst.max((got - want).abs());
        datasets += 1;
    }
    outcome(
        worst <= 1e-10,
        format!("{datasets} datasets (100 Gaussian, 100 categorical), max |diff| {worst:e}"),
    )
}

fn elimination_equivalence() -> Outcome {
    let mut mismatches = 0u64;
    let mut triples = 0u64;
    let patterns: Vec<DisplayPattern> = (0..1024).map(|m| DisplayPattern::from_mask(10, m)).collect();
    for cand_mask in 0u32..1024 {
        let candidates: BTreeSet<usize> = (0..10).filter(|d| cand_mask >> d & 1 == 1).collect();
        for (mask, pattern) in patterns.iter().enumerate() {
            for pressed in [MeaningLabel::A, MeaningLabel::B] {
                triples += 1;
                let side = if pressed == MeaningLabel::A { mask as u32 } else { !(mask as u32) & 1023 };
                let expect = cand_mask & side;
                let got = elimination_update(&candidates, pattern, pressed);
                let ok = match got {
                    Ok(set) => expect != 0 && set.iter().fold(0u32, |m, &d| m | 1 << d) == expect,
                    Err(_) => expect == 0,
                };
                if !ok {
                    mismatches += 1;
                }
            }
        }
    }

    // Every halving path from the full set: worst case is exactly 4 steps.
    fn worst_depth(candidates: &BTreeSet<usize>) -> usize {
        if candidates.len() <= 1 {
            return 0;
        }
        let members: Vec<usize> = candidates.iter().copied().collect();
        let half = members.len() / 2;
        let mut worst = 0;
        for sub in 0u32..1 << members.len() {
            let size = sub.count_ones() as usize;
            if size != half && size != members.len() - half {
                continue;
            }
            let a: Vec<usize> = (0..members.len()).filter(|&i| sub >> i & 1 == 1).map(|i| members[i]).collect();
            let pattern = DisplayPattern::from_a_set(10, &a).unwrap();
            for pressed in [MeaningLabel::A, MeaningLabel::B] {
                let next = elimination_update(candidates, &pattern, pressed).unwrap();
                worst = worst.max(1 + worst_depth(&next));
            }
        }
        worst
    }
    let depth = worst_depth(&(0..10).collect());
    outcome(
        mismatches == 0 && depth == 4,
        format!("{triples} triples, {mismatches} mismatches; worst halving path to a singleton {depth} steps"),
    )
}

fn replay_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for i in 0..100 {
        let (level, user) = match i % 4 {
            0 => (Level::KnownMeanings, UserModel::button(0.1)),
            1 => (Level::UnknownDiscrete, UserModel::button(rng.random_range(0.0..0.2))),
            2 => (Level::UnknownContinuous, UserModel::gaussian(rng.random_range(0.1..0.6))),
            _ => (Level::UnknownContinuous, UserModel::random_clicker()),
        };
        let code = random_code(&mut rng);
        let mut config = SessionConfig::new(level, code.clone(), rng.random());
        config.transfer = rng.random_bool(0.8);
        let (mut session, mut pattern) = CodeSession::start(config).unwrap();
        let steps = rng.random_range(1..=120);
        for _ in 0..steps {
            if session.status().is_terminal() {
                break;
            }
            let signal = gen_signal(&user, code[session.accepted().len()], &pattern, &mut rng);
            if let Some(next) = session.step(&signal).unwrap().next_pattern {
                pattern = next;
            }
        }
        match replay_str(&to_jsonl(session.log()), true) {
            Ok(r) if r.session.state_hash() == session.state_hash() && r.session.status() == session.status() => {}
            Ok(_) => failures.push(format!("session {i}: hash mismatch")),
            Err(e) => failures.push(format!("session {i}: {e}")),
        }
    }
    outcome(
        failures.is_empty(),
        format!("100 sessions replayed, {} mismatches {:?}", failures.len(), failures.first()),
    )
}

fn graceful_degradation() -> Outcome {
    let trials = 200;
    let mut rates = Vec::new();
    let mut unsound = 0;
    let mut summary = Vec::new();
    for sigma in [0.1, 0.4, 0.8] {
        let user = UserModel {
            kind: UserKind::Gaussian2d {
                mu_a: [-0.5, 0.0],
                mu_b: [0.5, 0.0],
                sigma,
            },
            flipped: false,
        };
        let results: Vec<TrialResult> = (0..trials).map(|i| trial(&user, i)).collect();
        let open = results.iter().filter(|r| r.opened).count() as f64 / trials as f64;
        let wrong: usize = results.iter().map(|r| r.wrong_acceptances).sum();
        unsound += results
            .iter()
            .filter(|r| !r.violations.is_empty() || (r.opened && r.wrong_acceptances > 0))
            .count();
        summary.push(format!("sigma {sigma}: open {open:.3}, wrong {:.4}", wrong as f64 / (4 * trials) as f64));
        rates.push(open);
    }
    let decreasing = rates.windows(2).all(|w| w[0] >= w[1]);
    outcome(
        decreasing && unsound == 0,
        format!("{} ({trials} trials each, unit separation); soundness violations {unsound}", summary.join("; ")),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 9] = [
        ("complement invariance", complement_invariance),
        ("end-to-end flip equivalence", flip_equivalence),
        ("identifiability lower bound", identifiability_bound),
        ("truth recovery", truth_recovery),
        ("adversarial soundness", adversarial_soundness),
        ("LOO oracle equivalence", loo_oracle),
        ("level-1 elimination equivalence", elimination_equivalence),
        ("replay determinism", replay_determinism),
        ("graceful degradation", graceful_degradation),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {name}: {} ({:.1} s)", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
