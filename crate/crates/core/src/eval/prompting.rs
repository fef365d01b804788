use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{rollout_closed_loop, to_f64, ActionModel, ActionQuery, Rollout};
use crate::error::{Error, Result};
use crate::masking::prefix_mask;
use crate::par;
use crate::rng::{derive_seed, seeded};
use crate::stats::mean_stderr;
use crate::traj::{EnvModel, Trajectory, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    /// Prompt length in timesteps; the last prompt state is the rollout's
    /// start state.
    pub prompt_len: usize,
    pub rollout: usize,
    pub n_episodes: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            prompt_len: 8,
            rollout: 120,
            n_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptEpisodeResult {
    pub cumulative_reward: f64,
    pub rewards: Vec<f64>,
    pub rollout_length: usize,
    pub source_traj: usize,
    pub start: usize,
    /// Reward the source trajectory collected over the same steps.
    pub reference_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSummary {
    pub episodes: Vec<PromptEpisodeResult>,
    pub mean: f64,
    pub stderr: f64,
}

/// Inclusive range of prompt start offsets for a trajectory of `len` steps.
fn start_range(len: usize, cfg: &PromptConfig) -> Result<(usize, usize)> {
    let need = cfg.prompt_len + cfg.rollout;
    let lo = len / 10;
    let hi = (len * 85 / 100).min(len.saturating_sub(need));
    if len < need || lo > hi {
        return Err(Error::Length {
            requested: need + lo,
            available: len,
        });
    }
    Ok((lo, hi))
}

/// Model input at rollout step `k`: the prompt's state-action pairs, the
/// executed pairs, the current state, and a masked tail. Once the history
/// no longer fits, the last prompt pair stays pinned at the front and the
/// most recent pairs fill the rest.
fn prompt_query(
    traj: &Trajectory,
    traj_idx: usize,
    start: usize,
    cfg: &PromptConfig,
    context: usize,
    k: usize,
    rollout: &Rollout,
) -> Result<ActionQuery> {
    let prompt_pairs = cfg.prompt_len - 1;
    let mut pairs: Vec<(&[f32], &[f32])> = (0..prompt_pairs)
        .map(|j| (traj.state(start + j), traj.action(start + j)))
        .collect();
    pairs.extend((0..k).map(|j| (rollout.states[j].as_slice(), rollout.actions[j].as_slice())));
    if pairs.len() + 1 > context {
        pairs = if prompt_pairs > 0 {
            let pinned = pairs[prompt_pairs - 1];
            let recent = pairs.split_off(pairs.len() - (context - 2));
            std::iter::once(pinned).chain(recent).collect()
        } else {
            pairs.split_off(pairs.len() - (context - 1))
        };
    }
    let mut window = Window::zeros(context, traj.state_dim(), traj.action_dim());
    for (t, (s, a)) in pairs.iter().enumerate() {
        window.token_mut(2 * t).iter_mut().zip(to_f64(s)).for_each(|(d, v)| *d = v);
        window.token_mut(2 * t + 1).iter_mut().zip(to_f64(a)).for_each(|(d, v)| *d = v);
    }
    let n = pairs.len();
    window
        .token_mut(2 * n)
        .iter_mut()
        .zip(to_f64(rollout.current_state()))
        .for_each(|(d, v)| *d = v);
    Ok(ActionQuery {
        window,
        mask: prefix_mask(2 * context, 2 * n + 1)?,
        action_token: 2 * n + 1,
        source_traj: traj_idx,
        source_t: start + cfg.prompt_len - 1 + k,
    })
}

fn run_episode<M: ActionModel + ?Sized>(
    model: &M,
    env: &EnvModel,
    validation: &[Trajectory],
    cfg: &PromptConfig,
    seed: u64,
    episode: usize,
) -> Result<PromptEpisodeResult> {
    let mut rng = seeded(derive_seed(seed, &format!("skill_prompting/{episode}")));
    let traj_idx = rng.random_range(0..validation.len());
    let traj = &validation[traj_idx];
    let (lo, hi) = start_range(traj.len(), cfg)?;
    let start = rng.random_range(lo..=hi);
    let anchor = start + cfg.prompt_len - 1;
    let context = model.context_timesteps();
    let rollout = rollout_closed_loop(model, env, traj.state(anchor), cfg.rollout, |k, r| {
        prompt_query(traj, traj_idx, start, cfg, context, k, r)
    })?;
    let reference_reward = (1..=cfg.rollout).map(|j| env.reward(traj.state(anchor + j))).sum();
    Ok(PromptEpisodeResult {
        cumulative_reward: rollout.rewards.iter().sum(),
        rollout_length: rollout.len(),
        rewards: rollout.rewards,
        source_traj: traj_idx,
        start,
        reference_reward,
    })
}

/// Continue behaviour from validation prompts and score it by environment
/// reward. Episode `i` draws its prompt from its own seeded stream.
pub fn skill_prompting_eval<M: ActionModel + ?Sized>(
    model: &M,
    env: &EnvModel,
    validation: &[Trajectory],
    cfg: &PromptConfig,
    seed: u64,
) -> Result<PromptSummary> {
    if validation.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    if cfg.prompt_len == 0 || cfg.n_episodes == 0 {
        return Err(Error::Param("prompt_len and n_episodes must be >= 1".into()));
    }
    if model.context_timesteps() < 2 {
        return Err(Error::Param("model context must hold at least two timesteps".into()));
    }
    let episodes = par::try_map_range(cfg.n_episodes, |i| run_episode(model, env, validation, cfg, seed, i))?;
    let totals: Vec<f64> = episodes.iter().map(|e| e.cumulative_reward).collect();
    let (mean, stderr) = mean_stderr(&totals);
    Ok(PromptSummary {
        episodes,
        mean,
        stderr,
    })
}
