//! Trajectories, token windows, normalization and the dataset container.

mod env;
mod format;
mod generate;

pub use env::{EnvModel, RewardKind};
pub use format::{decode_episode, encode_episode, read_dataset, read_episode, write_dataset, write_episode, EPISODE_MAGIC};
pub use generate::{
    episode_reward, generate_dataset, Dataset, DatasetManifest, PolicyMixture, PolicyTier,
    FORMAT_VERSION,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One episode: `T` rows of states and actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f32>,
    actions: Vec<f32>,
    state_dim: usize,
    action_dim: usize,
    pub env_id: String,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(
        states: Vec<f32>,
        actions: Vec<f32>,
        state_dim: usize,
        action_dim: usize,
        env_id: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Dimension("state and action dims must be positive".into()));
        }
        if !states.len().is_multiple_of(state_dim) || !actions.len().is_multiple_of(action_dim) {
            return Err(Error::Dimension("matrix length not a multiple of its width".into()));
        }
        let t = states.len() / state_dim;
        if t == 0 || actions.len() / action_dim != t {
            return Err(Error::Dimension(format!(
                "state rows {} and action rows {} must match and be >= 1",
                t,
                actions.len() / action_dim
            )));
        }
        if states.iter().chain(&actions).any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("non-finite trajectory entry".into()));
        }
        if actions.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(Error::RejectedInput("action outside [-1, 1]".into()));
        }
        Ok(Trajectory {
            states,
            actions,
            state_dim,
            action_dim,
            env_id: env_id.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state(&self, t: usize) -> &[f32] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f32] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn states(&self) -> &[f32] {
        &self.states
    }

    pub fn actions(&self) -> &[f32] {
        &self.actions
    }

    /// `W` consecutive timesteps starting at `start`, as a token window.
    pub fn window(&self, start: usize, timesteps: usize) -> Result<Window> {
        if timesteps == 0 || start + timesteps > self.len() {
            return Err(Error::Length {
                requested: start + timesteps,
                available: self.len(),
            });
        }
        let states = self.states[start * self.state_dim..(start + timesteps) * self.state_dim]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let actions = self.actions[start * self.action_dim..(start + timesteps) * self.action_dim]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        Window::new(states, actions, self.state_dim, self.action_dim, start)
    }
}

/// `W` consecutive timesteps viewed as `L = 2W` interleaved tokens
/// `s_0, a_0, s_1, a_1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    states: Vec<f64>,
    actions: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
    pub start_index: usize,
}

impl Window {
    pub fn new(
        states: Vec<f64>,
        actions: Vec<f64>,
        state_dim: usize,
        action_dim: usize,
        start_index: usize,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || !states.len().is_multiple_of(state_dim) {
            return Err(Error::Dimension("bad window state matrix".into()));
        }
        let w = states.len() / state_dim;
        if w == 0 || actions.len() != w * action_dim {
            return Err(Error::Dimension(format!(
                "window has {} state rows but {} action entries",
                w,
                actions.len()
            )));
        }
        Ok(Window {
            states,
            actions,
            state_dim,
            action_dim,
            start_index,
        })
    }

    pub fn zeros(timesteps: usize, state_dim: usize, action_dim: usize) -> Self {
        Window {
            states: vec![0.0; timesteps * state_dim],
            actions: vec![0.0; timesteps * action_dim],
            state_dim,
            action_dim,
            start_index: 0,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.states.len() / self.state_dim
    }

    /// Token count `L = 2W`.
    pub fn token_len(&self) -> usize {
        2 * self.timesteps()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn is_state_token(i: usize) -> bool {
        i.is_multiple_of(2)
    }

    pub fn token(&self, i: usize) -> &[f64] {
        let t = i / 2;
        if i.is_multiple_of(2) {
            &self.states[t * self.state_dim..(t + 1) * self.state_dim]
        } else {
            &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
        }
    }

    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        let t = i / 2;
        if i.is_multiple_of(2) {
            &mut self.states[t * self.state_dim..(t + 1) * self.state_dim]
        } else {
            &mut self.actions[t * self.action_dim..(t + 1) * self.action_dim]
        }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }
}

/// Draw a window of `timesteps` with its start uniform over `[0, T - W]`.
pub fn sample_window(traj: &Trajectory, timesteps: usize, rng: &mut Rng) -> Result<Window> {
    if timesteps > traj.len() || timesteps == 0 {
        return Err(Error::Length {
            requested: timesteps,
            available: traj.len(),
        });
    }
    let start = rng.random_range(0..=traj.len() - timesteps);
    traj.window(start, timesteps)
}

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension z-score statistics, computed over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
}

fn column_stats(data: &[f32], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = data.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (f64::from(v) - m).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / rows as f64).sqrt().max(STD_FLOOR))
        .collect();
    (mean, std)
}

impl NormStats {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        NormStats {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            action_mean: vec![0.0; action_dim],
            action_std: vec![1.0; action_dim],
        }
    }

    pub fn compute(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Data("cannot compute statistics of an empty split".into()))?;
        let (ds, da) = (first.state_dim(), first.action_dim());
        if trajectories
            .iter()
            .any(|t| t.state_dim() != ds || t.action_dim() != da)
        {
            return Err(Error::Dimension("mixed dimensions in split".into()));
        }
        let states: Vec<f32> = trajectories.iter().flat_map(|t| t.states().iter().copied()).collect();
        let actions: Vec<f32> = trajectories.iter().flat_map(|t| t.actions().iter().copied()).collect();
        let (state_mean, state_std) = column_stats(&states, ds);
        let (action_mean, action_std) = column_stats(&actions, da);
        Ok(NormStats {
            state_mean,
            state_std,
            action_mean,
            action_std,
        })
    }

    fn check(&self, w: &Window) -> Result<()> {
        if w.state_dim() != self.state_mean.len() || w.action_dim() != self.action_mean.len() {
            return Err(Error::Dimension(format!(
                "window dims ({}, {}) vs stats dims ({}, {})",
                w.state_dim(),
                w.action_dim(),
                self.state_mean.len(),
                self.action_mean.len()
            )));
        }
        Ok(())
    }

    fn apply(&self, w: &Window, f: impl Fn(f64, f64, f64) -> f64) -> Result<Window> {
        self.check(w)?;
        let map = |data: &[f64], mean: &[f64], std: &[f64]| -> Vec<f64> {
            data.chunks_exact(mean.len())
                .flat_map(|row| {
                    row.iter()
                        .zip(mean.iter().zip(std))
                        .map(|(&v, (&m, &s))| f(v, m, s.max(STD_FLOOR)))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        Window::new(
            map(w.states(), &self.state_mean, &self.state_std),
            map(w.actions(), &self.action_mean, &self.action_std),
            w.state_dim(),
            w.action_dim(),
            w.start_index,
        )
    }

    pub fn normalize(&self, w: &Window) -> Result<Window> {
        self.apply(w, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, w: &Window) -> Result<Window> {
        self.apply(w, |v, m, s| v * s + m)
    }
}
