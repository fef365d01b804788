//! Zero-shot evaluation against a simulated environment: skill prompting
//! and goal-conditioned planning, both driven by a closed-loop rollout.

mod planning;
mod prompting;

pub use planning::{goal_planning_eval, GoalPlanConfig, GoalPlanResult, GoalPlanSummary, DEFAULT_GOAL_STEPS};
pub use prompting::{skill_prompting_eval, PromptConfig, PromptEpisodeResult, PromptSummary};

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::MaskedPredictionNet;
use crate::masking::MaskMatrix;
use crate::traj::{EnvModel, NormStats, Trajectory, Window};

/// Everything an action model is shown when asked for one action.
#[derive(Debug, Clone)]
pub struct ActionQuery {
    /// Raw (unnormalized) context window; masked tokens hold placeholders.
    pub window: Window,
    pub mask: MaskMatrix,
    /// Token index of the action to produce.
    pub action_token: usize,
    /// Validation trajectory the episode was drawn from.
    pub source_traj: usize,
    /// Timestep of that trajectory the requested action corresponds to.
    pub source_t: usize,
}

pub trait ActionModel: Sync {
    fn act(&self, query: &ActionQuery) -> Result<Vec<f32>>;

    /// Window length in timesteps the model can consume.
    fn context_timesteps(&self) -> usize;
}

/// Point prediction of the network's action head.
#[derive(Debug, Clone)]
pub struct NetActionModel<'a> {
    pub net: &'a MaskedPredictionNet,
    pub stats: &'a NormStats,
}

impl ActionModel for NetActionModel<'_> {
    fn act(&self, q: &ActionQuery) -> Result<Vec<f32>> {
        let filled = self.net.predict_tokens(self.stats, &q.window, &q.mask)?;
        Ok(filled.token(q.action_token).iter().map(|&a| a as f32).collect())
    }

    fn context_timesteps(&self) -> usize {
        self.net.config().context_tokens / 2
    }
}

/// Replays the recorded actions of the source trajectory. In a
/// deterministic environment this scores the optimum of both evaluations,
/// which checks the harness independently of any learner.
#[derive(Debug, Clone)]
pub struct ReplayOracle<'a> {
    pub trajectories: &'a [Trajectory],
    pub context_timesteps: usize,
}

impl ActionModel for ReplayOracle<'_> {
    fn act(&self, q: &ActionQuery) -> Result<Vec<f32>> {
        let traj = self
            .trajectories
            .get(q.source_traj)
            .ok_or_else(|| Error::Param(format!("no trajectory {}", q.source_traj)))?;
        if q.source_t >= traj.len() {
            return Err(Error::Length {
                requested: q.source_t + 1,
                available: traj.len(),
            });
        }
        Ok(traj.action(q.source_t).to_vec())
    }

    fn context_timesteps(&self) -> usize {
        self.context_timesteps
    }
}

/// State, action and reward streams of one closed-loop rollout.
/// `states` has one more entry than `actions` (the start state).
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub rewards: Vec<f64>,
}

impl Rollout {
    pub fn current_state(&self) -> &[f32] {
        self.states.last().expect("rollout holds the start state")
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Run `horizon` steps: at each step `query` builds the model input from the
/// rollout so far, the model's action is executed and the observed state
/// appended.
pub fn rollout_closed_loop<M, F>(
    model: &M,
    env: &EnvModel,
    start_state: &[f32],
    horizon: usize,
    mut query: F,
) -> Result<Rollout>
where
    M: ActionModel + ?Sized,
    F: FnMut(usize, &Rollout) -> Result<ActionQuery>,
{
    if start_state.len() != env.state_dim() {
        return Err(Error::Dimension(format!(
            "start state has {} dims, env expects {}",
            start_state.len(),
            env.state_dim()
        )));
    }
    let mut out = Rollout {
        states: vec![start_state.to_vec()],
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for k in 0..horizon {
        let q = query(k, &out)?;
        if q.window.timesteps() > model.context_timesteps() {
            return Err(Error::Dimension(format!(
                "query of {} timesteps exceeds model context {}",
                q.window.timesteps(),
                model.context_timesteps()
            )));
        }
        let action = model.act(&q)?;
        let (next, reward) = env.step(out.current_state(), &action)?;
        out.actions.push(action);
        out.states.push(next);
        out.rewards.push(reward);
    }
    Ok(out)
}

pub(crate) fn to_f64(v: &[f32]) -> impl Iterator<Item = f64> + '_ {
    v.iter().map(|&x| f64::from(x))
}

/// One summary line of `eval.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run_id: String,
    pub method: String,
    pub task: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed_base: u64,
}

/// Append rows to `eval.csv`, writing the header when the file is new.
pub fn append_eval_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let fresh = !path.exists() || path.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::RewardKind;

    struct Constant(Vec<f32>);

    impl ActionModel for Constant {
        fn act(&self, _: &ActionQuery) -> Result<Vec<f32>> {
            Ok(self.0.clone())
        }

        fn context_timesteps(&self) -> usize {
            4
        }
    }

    fn query(_: usize, r: &Rollout) -> Result<ActionQuery> {
        let mut window = Window::zeros(4, 4, 2);
        window.token_mut(0).iter_mut().zip(r.current_state()).for_each(|(d, &s)| *d = f64::from(s));
        Ok(ActionQuery {
            window,
            mask: crate::masking::prefix_mask(8, 1)?,
            action_token: 1,
            source_traj: 0,
            source_t: 0,
        })
    }

    #[test]
    fn single_step_equals_env_step() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let start = [0.2f32, -0.1, 0.0, 0.3];
        let r = rollout_closed_loop(&Constant(vec![0.5, -1.0]), &env, &start, 1, query).unwrap();
        let (next, reward) = env.step(&start, &[0.5, -1.0]).unwrap();
        assert_eq!(r.states, vec![start.to_vec(), next]);
        assert_eq!(r.rewards, vec![reward]);
    }

    #[test]
    fn resimulation_reproduces_states() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let start = [0.0f32, 0.0, 0.1, 0.0];
        let r = rollout_closed_loop(&Constant(vec![0.3, 0.7]), &env, &start, 25, query).unwrap();
        let mut s = start.to_vec();
        for (k, a) in r.actions.iter().enumerate() {
            s = env.step(&s, a).unwrap().0;
            assert_eq!(s, r.states[k + 1]);
        }
        let empty = rollout_closed_loop(&Constant(vec![0.0, 0.0]), &env, &start, 0, query).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn oversized_query_rejected() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let big = |_: usize, _: &Rollout| {
            Ok(ActionQuery {
                window: Window::zeros(5, 4, 2),
                mask: MaskMatrix::ones(10),
                action_token: 1,
                source_traj: 0,
                source_t: 0,
            })
        };
        let r = rollout_closed_loop(&Constant(vec![0.0, 0.0]), &env, &[0.0; 4], 1, big);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn eval_csv_appends_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let row = EvalRow {
            run_id: "abc".into(),
            method: "currmask".into(),
            task: "skill_prompting".into(),
            metric: "reward".into(),
            mean: 1.5,
            stderr: 0.25,
            n: 20,
            seed_base: 7,
        };
        append_eval_rows(&path, std::slice::from_ref(&row)).unwrap();
        append_eval_rows(&path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "run_id,method,task,metric,mean,stderr,n,seed_base");
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_eval_rows(&path).unwrap(), vec![row.clone(), row]);
    }
}
