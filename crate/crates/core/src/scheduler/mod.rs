//! Automated curriculum over the masking pool.
//!
//! EXP3 keeps one exponential weight per masking scheme. Every evaluation
//! interval the decrease of the target loss is rescaled into `[-1, 1]` by
//! percentiles of the reward history and fed back as the reward of the arm
//! that was trained during the interval.

mod baseline;
mod target;

pub use baseline::{baseline_distribution, baseline_next_scheme, Method, ScheduledScheme};
pub use target::{compute_target_loss, TargetProbe};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::nearest_rank_percentile;

/// History length below which rewards are only clamped, not rescaled.
pub const COLD_START: usize = 5;
pub const LOW_PERCENTILE: f64 = 20.0;
pub const HIGH_PERCENTILE: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub raw: f64,
}

/// EXP3 state. Weights are stored as logarithms so long runs cannot
/// overflow; `exp(log_weights)` are the weights proper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    log_weights: Vec<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    pub history: Vec<HistoryEntry>,
    pub current_arm: usize,
    /// Rescale against only the most recent entries when set.
    pub percentile_window: Option<usize>,
}

impl SchedulerState {
    /// Uniform weights `w_k = 1`.
    pub fn new(arms: usize, epsilon: f64, gamma: f64) -> Result<Self> {
        Self::with_weights(&vec![1.0; arms], epsilon, gamma)
    }

    pub fn with_weights(weights: &[f64], epsilon: f64, gamma: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Param("scheduler needs at least one arm".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Param("weights must be positive and finite".into()));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Param(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Param(format!("gamma {gamma} must be finite and >= 0")));
        }
        Ok(SchedulerState {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            epsilon,
            gamma,
            history: Vec::new(),
            current_arm: 0,
            percentile_window: None,
        })
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `pi(i) = (1 - eps) w_i / sum_j w_j + eps / K`.
    pub fn sampling_distribution(&self) -> Vec<f64> {
        let k = self.arms() as f64;
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rel: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = rel.iter().sum();
        rel.iter()
            .map(|w| (1.0 - self.epsilon) * w / total + self.epsilon / k)
            .collect()
    }

    /// Importance-weighted update `w_k *= exp(gamma * r / (pi(k) K))`; the
    /// other arms are untouched.
    pub fn update_weights(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::Contract(format!("arm {arm} out of range {}", self.arms())));
        }
        if !(-1.0..=1.0).contains(&reward) {
            return Err(Error::Contract(format!("scaled reward {reward} outside [-1, 1]")));
        }
        let pi = self.sampling_distribution()[arm];
        self.log_weights[arm] += self.gamma * reward / (pi * self.arms() as f64);
        Ok(())
    }

    pub fn sample_arm(&self, rng: &mut Rng) -> usize {
        sample_categorical(&self.sampling_distribution(), rng)
    }

    fn reward_window(&self) -> Vec<f64> {
        let skip = self
            .percentile_window
            .map_or(0, |w| self.history.len().saturating_sub(w));
        self.history[skip..].iter().map(|h| h.raw).collect()
    }

    /// One evaluation-interval update: record the loss decrease, rescale it,
    /// update the pulled arm and draw the next arm from the new distribution.
    pub fn curriculum_step(
        &mut self,
        snapshot: &ProgressSnapshot,
        rng: &mut Rng,
    ) -> Result<CurriculumUpdate> {
        if !snapshot.loss_before.is_finite() || !snapshot.loss_after.is_finite() {
            return Err(Error::NonFinite {
                step: snapshot.step,
                detail: format!(
                    "target losses before={} after={}",
                    snapshot.loss_before, snapshot.loss_after
                ),
            });
        }
        let raw = snapshot.loss_before - snapshot.loss_after;
        self.history.push(HistoryEntry {
            step: snapshot.step,
            raw,
        });
        let scaled = scale_reward(&self.reward_window(), raw);
        let pulled_arm = self.current_arm;
        self.update_weights(pulled_arm, scaled)?;
        let probabilities = self.sampling_distribution();
        let next_arm = sample_categorical(&probabilities, rng);
        self.current_arm = next_arm;
        Ok(CurriculumUpdate {
            pulled_arm,
            raw_reward: raw,
            scaled_reward: scaled,
            probabilities,
            next_arm,
        })
    }
}

/// Mean validation target losses around one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressSnapshot {
    pub step: usize,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumUpdate {
    pub pulled_arm: usize,
    pub raw_reward: f64,
    pub scaled_reward: f64,
    /// Distribution after the update; `next_arm` was drawn from it.
    pub probabilities: Vec<f64>,
    pub next_arm: usize,
}

/// Inverse-CDF draw from `probs` using one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `max(-1, min(1, 2 (r - lo) / (hi - lo) - 1))`, evaluated as
/// `(2r - (lo + hi)) / (hi - lo)`; 0 when `hi == lo`.
pub fn scale_with_percentiles(raw: f64, lo: f64, hi: f64) -> f64 {
    if hi == lo {
        return 0.0;
    }
    if raw >= hi {
        return 1.0;
    }
    if raw <= lo {
        return -1.0;
    }
    ((2.0 * raw - (lo + hi)) / (hi - lo)).clamp(-1.0, 1.0)
}

/// Rescale a raw learning-progress value against the 20th/80th nearest-rank
/// percentiles of `history`, which must already contain `raw`. Before
/// [`COLD_START`] entries exist the raw value is clamped instead.
pub fn scale_reward(history: &[f64], raw: f64) -> f64 {
    if history.len() < COLD_START {
        return raw.clamp(-1.0, 1.0);
    }
    let lo = nearest_rank_percentile(history, LOW_PERCENTILE).expect("non-empty");
    let hi = nearest_rank_percentile(history, HIGH_PERCENTILE).expect("non-empty");
    scale_with_percentiles(raw, lo, hi)
}
