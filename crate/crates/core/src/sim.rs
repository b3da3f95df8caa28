//! Monte Carlo checks of the test's error rates.
//!
//! `simulate_fdr` and `simulate_dsr` draw rank tuples directly from a rank
//! model; `end_to_end_sim` runs the real marker and detector over Python
//! sources with mock models. Every trial gets its own generator seeded from
//! `(seed, trial index)`, so results do not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect_sources, Decision, DetectError, DetectionReport};
use crate::hash::{derive_seed, splitmix64};
use crate::marker::{mark_sources, MarkError, MarkParams};
use crate::model::mock::{MemorizingScorer, MockModel};
use crate::model::{AccessMode, LogitsProvider, TokenId};
use crate::nulldist::{self, NullDistError, Probability};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation argument: {0}")]
    Argument(String),
    #[error(transparent)]
    NullDist(#[from] NullDistError),
    #[error(transparent)]
    Mark(#[from] MarkError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// How a trained target's rank for the published candidate departs from
/// uniform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemorizationModel {
    /// The null: ranks uniform on `1..=m`.
    None,
    /// Candidate scores are i.i.d. standard normal; with probability `q`
    /// the published one gets `+delta`.
    AdditiveLogitBoost { delta: f64, q: f64 },
    /// Rank `min(m, 1 + G)` with `G` the failures before the first success
    /// at success probability `theta`.
    RankGeometric { theta: f64 },
}

impl MemorizationModel {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            MemorizationModel::None => Ok(()),
            MemorizationModel::AdditiveLogitBoost { delta, q } => {
                if delta.is_nan() || delta == f64::NEG_INFINITY || !(0.0..=1.0).contains(&q) {
                    return Err(SimError::Argument(format!("boost needs delta finite or +inf and q in [0, 1], got {delta}, {q}")));
                }
                Ok(())
            }
            MemorizationModel::RankGeometric { theta } => {
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(SimError::Argument(format!("theta must be in (0, 1], got {theta}")));
                }
                Ok(())
            }
        }
    }

    /// One rank in `1..=m`.
    pub fn draw_rank<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> usize {
        match *self {
            MemorizationModel::None => rng.random_range(1..=m),
            MemorizationModel::RankGeometric { theta } => {
                let g = Geometric::new(theta).expect("validated theta").sample(rng);
                (1 + g.min(m as u64 - 1)) as usize
            }
            MemorizationModel::AdditiveLogitBoost { delta, q } => {
                let boosted = rng.random::<f64>() < q;
                let mut own: f64 = StandardNormal.sample(rng);
                if boosted {
                    own += delta;
                }
                let above = (1..m)
                    .filter(|_| {
                        let other: f64 = StandardNormal.sample(rng);
                        other > own
                    })
                    .count();
                1 + above
            }
        }
    }
}

impl fmt::Display for MemorizationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemorizationModel::None => write!(f, "none"),
            MemorizationModel::AdditiveLogitBoost { delta, q } => write!(f, "boost:{delta}:{q}"),
            MemorizationModel::RankGeometric { theta } => write!(f, "geometric:{theta}"),
        }
    }
}

impl FromStr for MemorizationModel {
    type Err = SimError;

    /// `none`, `geometric:<theta>` or `boost:<delta>:<q>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|e| SimError::Argument(format!("{t:?} in {s:?}: {e}")))
        };
        let model = match parts.as_slice() {
            ["none"] => MemorizationModel::None,
            ["geometric", theta] => MemorizationModel::RankGeometric { theta: num(theta)? },
            ["boost", delta, q] => MemorizationModel::AdditiveLogitBoost {
                delta: num(delta)?,
                q: num(q)?,
            },
            _ => {
                return Err(SimError::Argument(format!(
                    "unknown memorization model {s:?}; expected none, geometric:<theta> or boost:<delta>:<q>"
                )))
            }
        };
        model.validate()?;
        Ok(model)
    }
}

/// A rejection-frequency estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    /// Binomial standard error `sqrt(rate (1 - rate) / trials)`.
    pub se: f64,
}

impl RateEstimate {
    pub fn new(trials: u64, successes: u64) -> Self {
        let rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let se = if trials == 0 { 0.0 } else { (rate * (1.0 - rate) / trials as f64).sqrt() };
        Self {
            trials,
            successes,
            rate,
            se,
        }
    }
}

pub const MIN_TRIALS: u64 = 100;

fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(seed, &format!("trial:{trial}")))
}

/// Fraction of `trials` rank tuples drawn from `model` whose sum is at most
/// the exact threshold for `(n, m, p)`.
pub fn simulate_dsr(
    n: u64,
    m: u64,
    p: &Probability,
    model: MemorizationModel,
    trials: u64,
    seed: u64,
) -> Result<RateEstimate, SimError> {
    if trials < MIN_TRIALS {
        return Err(SimError::Argument(format!("at least {MIN_TRIALS} trials required, got {trials}")));
    }
    model.validate()?;
    let threshold = nulldist::threshold(n, m, p)?;
    let Some(t) = threshold.t() else {
        return Ok(RateEstimate::new(trials, 0));
    };
    let successes = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = trial_rng(seed, i);
            let s: u64 = (0..n).map(|_| model.draw_rank(m as usize, &mut rng) as u64).sum();
            s <= t
        })
        .count() as u64;
    Ok(RateEstimate::new(trials, successes))
}

/// Empirical false-detection rate: [`simulate_dsr`] under the null.
pub fn simulate_fdr(n: u64, m: u64, p: &Probability, trials: u64, seed: u64) -> Result<RateEstimate, SimError> {
    simulate_dsr(n, m, p, MemorizationModel::None, trials, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    M,
    P,
    Theta,
}

impl FromStr for Axis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(Axis::N),
            "m" => Ok(Axis::M),
            "p" => Ok(Axis::P),
            "theta" => Ok(Axis::Theta),
            _ => Err(SimError::Argument(format!("unknown sweep axis {s:?}; expected n, m, p or theta"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub point: String,
    pub estimate: RateEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate.rate).collect()
    }

    /// `point,trials,successes,rate,se`, rates and errors with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,trials,successes,rate,se\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                p.point, p.estimate.trials, p.estimate.successes, p.estimate.rate, p.estimate.se
            ));
        }
        out
    }
}

/// Base settings that a sweep varies one axis of.
#[derive(Clone, Debug)]
pub struct SweepBase {
    pub n: u64,
    pub m: u64,
    pub p: Probability,
    pub model: MemorizationModel,
    pub trials: u64,
    pub seed: u64,
}

/// Runs [`simulate_dsr`] at each grid value of `axis`. Grid values are
/// decimal text so `p` stays exact.
pub fn sweep(base: &SweepBase, axis: Axis, grid: &[String]) -> Result<SweepResult, SimError> {
    let mut points = Vec::with_capacity(grid.len());
    for g in grid {
        let (mut n, mut m, mut p, mut model) = (base.n, base.m, base.p.clone(), base.model);
        let bad = |e: String| SimError::Argument(format!("grid value {g:?}: {e}"));
        match axis {
            Axis::N => n = g.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            Axis::M => m = g.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            Axis::P => p = g.parse()?,
            Axis::Theta => {
                let theta = g.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                model = MemorizationModel::RankGeometric { theta };
            }
        }
        let estimate = simulate_dsr(n, m, &p, model, base.trials, base.seed)?;
        points.push(SweepPoint {
            point: g.clone(),
            estimate,
        });
    }
    Ok(SweepResult { axis, points })
}

/// Settings of one end-to-end run.
#[derive(Clone, Debug)]
pub struct E2eConfig {
    pub params: MarkParams,
    pub p: Probability,
    pub memorization: MemorizationModel,
    /// Access mode of the target.
    pub access: AccessMode,
}

/// Seeds of one end-to-end run, all derived from the run seed.
pub fn e2e_seeds(seed: u64) -> (u64, u64, u64) {
    let oracle = splitmix64(seed ^ 0x6f72_6163_6c65);
    let target = splitmix64(seed ^ 0x7461_7267_6574);
    (oracle, seed, target)
}

/// Marks `files` with a mock oracle, builds a target from the memorization
/// model, and detects.
///
/// `None` uses a hash model with an unrelated seed; the boost trains a
/// memorizing model on the published files. The geometric model describes
/// ranks, not scores, so it has no end-to-end form.
pub fn end_to_end_sim(files: &[(String, Vec<u8>)], config: &E2eConfig, seed: u64) -> Result<DetectionReport, SimError> {
    let (oracle_seed, mark_seed, target_seed) = e2e_seeds(seed);
    let oracle = MockModel::new(oracle_seed);
    let (published, manifest) = mark_sources(files, &oracle, &config.params, mark_seed, Vec::new())?;
    let published: BTreeMap<String, Vec<u8>> = published.into_iter().collect();
    let report = match config.memorization {
        MemorizationModel::None => {
            let target = MockModel::new(target_seed).with_access(config.access);
            detect_sources(&published, &manifest, &oracle, &target, &config.p)?
        }
        MemorizationModel::AdditiveLogitBoost { delta, q } => {
            let mut scorer = MemorizingScorer::new(target_seed, delta, q);
            let tok = oracle.tokenizer();
            for bytes in published.values() {
                let ids: Vec<TokenId> = tok.encode(bytes).iter().map(|t| t.id).collect();
                scorer.train(&ids);
            }
            let target = MockModel::memorizing(scorer).with_access(config.access);
            detect_sources(&published, &manifest, &oracle, &target, &config.p)?
        }
        MemorizationModel::RankGeometric { .. } => {
            return Err(SimError::Argument(
                "the geometric model has no end-to-end form; use none or boost".into(),
            ))
        }
    };
    Ok(report)
}

/// Seed of end-to-end trial `trial` under run seed `seed`.
pub fn e2e_trial_seed(seed: u64, trial: u64) -> u64 {
    let bytes = derive_seed(seed, &format!("trial:{trial}"));
    u64::from_le_bytes(bytes[..8].try_into().expect("32-byte seed"))
}

/// `trials` independent end-to-end runs over the same files, in trial order.
pub fn end_to_end_trials(
    files: &[(String, Vec<u8>)],
    config: &E2eConfig,
    trials: u64,
    seed: u64,
) -> Result<Vec<DetectionReport>, SimError> {
    (0..trials)
        .into_par_iter()
        .map(|i| end_to_end_sim(files, config, e2e_trial_seed(seed, i)))
        .collect()
}

/// Fraction of reports that detected.
pub fn detection_rate(reports: &[DetectionReport]) -> RateEstimate {
    let hits = reports.iter().filter(|r| r.decision == Decision::Detected).count();
    RateEstimate::new(reports.len() as u64, hits as u64)
}
