use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{rollout_closed_loop, to_f64, ActionModel, ActionQuery, Rollout};
use crate::error::{Error, Result};
use crate::masking::goal_mask;
use crate::par;
use crate::rng::{derive_seed, seeded};
use crate::stats::mean_stderr;
use crate::traj::{EnvModel, Trajectory, Window};

pub const DEFAULT_GOAL_STEPS: [usize; 4] = [20, 40, 60, 80];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalPlanConfig {
    /// Goal offsets from the start state, in timesteps.
    pub goal_steps: Vec<usize>,
    pub horizon: usize,
    pub n_episodes: usize,
}

impl Default for GoalPlanConfig {
    fn default() -> Self {
        GoalPlanConfig {
            goal_steps: DEFAULT_GOAL_STEPS.to_vec(),
            horizon: 100,
            n_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalPlanResult {
    /// Sorted goal offsets.
    pub goal_steps: Vec<usize>,
    /// Closest approach to each goal over the visited states.
    pub distances: Vec<f64>,
    pub source_traj: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalPlanSummary {
    pub episodes: Vec<GoalPlanResult>,
    pub goal_steps: Vec<usize>,
    pub per_goal_mean: Vec<f64>,
    pub per_goal_stderr: Vec<f64>,
    /// Over episodes of the per-episode mean distance.
    pub mean: f64,
    pub stderr: f64,
}

fn l2(a: &[f32], b: &[f32]) -> f64 {
    to_f64(a).zip(to_f64(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimum distance from `goal` to any of `states`.
pub(crate) fn closest_approach(states: &[Vec<f32>], goal: &[f32]) -> f64 {
    states.iter().map(|s| l2(s, goal)).fold(f64::INFINITY, f64::min)
}

/// Goal token positions at rollout step `k`, with the current state at
/// token 0. Goals inside the window sit at their true offset. When none
/// fits, the nearest upcoming goal is placed at the last state slot; once
/// every goal has passed, the final goal is requested at the next step.
fn goal_slots(goal_steps: &[usize], k: usize, context: usize) -> Vec<(usize, usize)> {
    let upcoming: Vec<usize> = goal_steps.iter().copied().filter(|&g| g > k).collect();
    let inside: Vec<(usize, usize)> = upcoming
        .iter()
        .filter(|&&g| g - k < context)
        .map(|&g| (g, 2 * (g - k)))
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    match upcoming.first() {
        Some(&g) => vec![(g, 2 * (context - 1))],
        None => vec![(*goal_steps.last().expect("non-empty goals"), 2)],
    }
}

fn plan_query(
    traj: &Trajectory,
    traj_idx: usize,
    start: usize,
    goal_steps: &[usize],
    context: usize,
    k: usize,
    rollout: &Rollout,
) -> Result<ActionQuery> {
    let mut window = Window::zeros(context, traj.state_dim(), traj.action_dim());
    window
        .token_mut(0)
        .iter_mut()
        .zip(to_f64(rollout.current_state()))
        .for_each(|(d, v)| *d = v);
    let slots = goal_slots(goal_steps, k, context);
    for &(g, tok) in &slots {
        window
            .token_mut(tok)
            .iter_mut()
            .zip(to_f64(traj.state(start + g)))
            .for_each(|(d, v)| *d = v);
    }
    let tokens: Vec<usize> = slots.iter().map(|&(_, t)| t).collect();
    Ok(ActionQuery {
        window,
        mask: goal_mask(2 * context, &tokens)?,
        action_token: 1,
        source_traj: traj_idx,
        source_t: start + k,
    })
}

fn run_episode<M: ActionModel + ?Sized>(
    model: &M,
    env: &EnvModel,
    validation: &[Trajectory],
    cfg: &GoalPlanConfig,
    goal_steps: &[usize],
    seed: u64,
    episode: usize,
) -> Result<GoalPlanResult> {
    let mut rng = seeded(derive_seed(seed, &format!("goal_planning/{episode}")));
    let traj_idx = rng.random_range(0..validation.len());
    let traj = &validation[traj_idx];
    let len = traj.len();
    let lo = len / 10;
    if len <= cfg.horizon + lo {
        return Err(Error::Length {
            requested: cfg.horizon + lo + 1,
            available: len,
        });
    }
    let hi = (len - 1 - cfg.horizon).min(len * 85 / 100);
    let start = rng.random_range(lo..=hi);
    let context = model.context_timesteps();
    let rollout = rollout_closed_loop(model, env, traj.state(start), cfg.horizon, |k, r| {
        plan_query(traj, traj_idx, start, goal_steps, context, k, r)
    })?;
    let distances = goal_steps
        .iter()
        .map(|&g| closest_approach(&rollout.states, traj.state(start + g)))
        .collect();
    Ok(GoalPlanResult {
        goal_steps: goal_steps.to_vec(),
        distances,
        source_traj: traj_idx,
        start,
    })
}

/// Reach future states of validation trajectories from their start state
/// and score the closest approach to each goal.
pub fn goal_planning_eval<M: ActionModel + ?Sized>(
    model: &M,
    env: &EnvModel,
    validation: &[Trajectory],
    cfg: &GoalPlanConfig,
    seed: u64,
) -> Result<GoalPlanSummary> {
    if validation.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let mut goal_steps = cfg.goal_steps.clone();
    goal_steps.sort_unstable();
    goal_steps.dedup();
    if goal_steps.is_empty() || goal_steps[0] == 0 || *goal_steps.last().expect("non-empty") > cfg.horizon {
        return Err(Error::Param(format!(
            "goal steps {:?} must be non-empty and within 1..={}",
            cfg.goal_steps, cfg.horizon
        )));
    }
    if cfg.n_episodes == 0 || model.context_timesteps() < 2 {
        return Err(Error::Param("need >= 1 episode and a context of >= 2 timesteps".into()));
    }
    let episodes = par::try_map_range(cfg.n_episodes, |i| {
        run_episode(model, env, validation, cfg, &goal_steps, seed, i)
    })?;
    let (per_goal_mean, per_goal_stderr) = (0..goal_steps.len())
        .map(|j| mean_stderr(&episodes.iter().map(|e| e.distances[j]).collect::<Vec<_>>()))
        .unzip();
    let overall: Vec<f64> = episodes
        .iter()
        .map(|e| e.distances.iter().sum::<f64>() / e.distances.len() as f64)
        .collect();
    let (mean, stderr) = mean_stderr(&overall);
    Ok(GoalPlanSummary {
        episodes,
        goal_steps,
        per_goal_mean,
        per_goal_stderr,
        mean,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_follow_receding_horizon() {
        let goals = [20, 40, 60, 80];
        assert_eq!(goal_slots(&goals, 0, 16), vec![(20, 30)]);
        assert_eq!(goal_slots(&goals, 10, 16), vec![(20, 20)]);
        assert_eq!(goal_slots(&goals, 30, 16), vec![(40, 20)]);
        assert_eq!(goal_slots(&goals, 50, 16), vec![(60, 20)]);
        assert_eq!(goal_slots(&goals, 79, 16), vec![(80, 2)]);
        assert_eq!(goal_slots(&goals, 90, 16), vec![(80, 2)]);
        assert_eq!(goal_slots(&[3, 5], 0, 16), vec![(3, 6), (5, 10)]);
    }

    #[test]
    fn closest_approach_includes_every_state() {
        let states = vec![vec![0.0f32, 0.0], vec![3.0, 4.0], vec![1.0, 1.0]];
        assert_eq!(closest_approach(&states, &[3.0, 4.0]), 0.0);
        assert_eq!(closest_approach(&states[..1], &[3.0, 4.0]), 5.0);
    }
}
