//! Deterministic toy environments used to generate data and to run the
//! closed-loop evaluations.
//!
//! All dynamics run in `f32` so that the states written to disk are exactly
//! the states the simulator produces; replaying a recorded action stream
//! reproduces the recorded states bit for bit.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `-||pos - goal||`
    Dense,
    /// 1 inside the goal radius, 0 outside.
    Sparse,
    /// Mean segment velocity.
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dynamics {
    /// State `(x, y, vx, vy)`, action `(ax, ay)`.
    PointMass {
        goal: [f32; 2],
        p_max: f32,
        v_max: f32,
    },
    /// `k` unit masses on a line coupled by springs to their neighbours.
    /// State is `k` positions followed by `k` velocities, one force per mass.
    ChainWalker {
        segments: usize,
        stiffness: f32,
        v_max: f32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub env_id: String,
    pub dt: f32,
    pub damping: f32,
    pub reward: RewardKind,
    pub dynamics: Dynamics,
}

pub const SPARSE_RADIUS: f32 = 0.1;

impl EnvModel {
    pub fn point_mass_2d(reward: RewardKind) -> Self {
        EnvModel {
            env_id: match reward {
                RewardKind::Sparse => "point_mass_2d_sparse".into(),
                _ => "point_mass_2d".into(),
            },
            dt: 0.1,
            damping: 0.0,
            reward,
            dynamics: Dynamics::PointMass {
                goal: [0.5, 0.5],
                p_max: 1.0,
                v_max: 1.0,
            },
        }
    }

    pub fn chain_walker_1d(segments: usize) -> Self {
        EnvModel {
            env_id: "chain_walker_1d".into(),
            dt: 0.1,
            damping: 0.1,
            reward: RewardKind::Velocity,
            dynamics: Dynamics::ChainWalker {
                segments,
                stiffness: 1.0,
                v_max: 2.0,
            },
        }
    }

    pub fn from_id(env_id: &str) -> Result<Self> {
        match env_id {
            "point_mass_2d" => Ok(Self::point_mass_2d(RewardKind::Dense)),
            "point_mass_2d_sparse" => Ok(Self::point_mass_2d(RewardKind::Sparse)),
            "chain_walker_1d" => Ok(Self::chain_walker_1d(3)),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::PointMass { .. } => 4,
            Dynamics::ChainWalker { segments, .. } => 2 * segments,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::PointMass { .. } => 2,
            Dynamics::ChainWalker { segments, .. } => segments,
        }
    }

    fn validate(&self, state: &[f32], action: &[f32]) -> Result<()> {
        if state.len() != self.state_dim() || action.len() != self.action_dim() {
            return Err(Error::Dimension(format!(
                "{}: expected state/action dims ({}, {}), got ({}, {})",
                self.env_id,
                self.state_dim(),
                self.action_dim(),
                state.len(),
                action.len()
            )));
        }
        if state.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("non-finite state or action".into()));
        }
        if action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(Error::RejectedInput("action outside [-1, 1]".into()));
        }
        Ok(())
    }

    /// Advance one semi-implicit Euler step. Returns `(next_state, reward)`.
    pub fn step(&self, state: &[f32], action: &[f32]) -> Result<(Vec<f32>, f64)> {
        self.validate(state, action)?;
        let dt = self.dt;
        let next = match self.dynamics {
            Dynamics::PointMass { p_max, v_max, .. } => {
                let mut next = vec![0.0f32; 4];
                for i in 0..2 {
                    let vel = state[2 + i];
                    let v = (vel + (action[i] - self.damping * vel) * dt).clamp(-v_max, v_max);
                    next[2 + i] = v;
                    next[i] = (state[i] + v * dt).clamp(-p_max, p_max);
                }
                next
            }
            Dynamics::ChainWalker {
                segments: k,
                stiffness,
                v_max,
            } => {
                let mut next = vec![0.0f32; 2 * k];
                for i in 0..k {
                    let x = state[i];
                    let mut spring = 0.0f32;
                    if i > 0 {
                        spring += state[i - 1] - x;
                    }
                    if i + 1 < k {
                        spring += state[i + 1] - x;
                    }
                    let vel = state[k + i];
                    let acc = action[i] + stiffness * spring - self.damping * vel;
                    let v = (vel + acc * dt).clamp(-v_max, v_max);
                    next[k + i] = v;
                    next[i] = x + v * dt;
                }
                next
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("dynamics produced a non-finite state".into()));
        }
        let reward = self.reward(&next);
        Ok((next, reward))
    }

    /// Reward for arriving in `state`.
    pub fn reward(&self, state: &[f32]) -> f64 {
        match (&self.dynamics, self.reward) {
            (Dynamics::PointMass { goal, .. }, kind) => {
                let dx = f64::from(state[0]) - f64::from(goal[0]);
                let dy = f64::from(state[1]) - f64::from(goal[1]);
                let d = (dx * dx + dy * dy).sqrt();
                match kind {
                    RewardKind::Sparse => {
                        if d < f64::from(SPARSE_RADIUS) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => -d,
                }
            }
            (Dynamics::ChainWalker { segments, .. }, _) => {
                let k = *segments;
                state[k..].iter().map(|&v| f64::from(v)).sum::<f64>() / k as f64
            }
        }
    }

    pub fn initial_state(&self, rng: &mut Rng) -> Vec<f32> {
        match self.dynamics {
            Dynamics::PointMass { p_max, .. } => {
                let r = 0.9 * p_max;
                vec![rng.random_range(-r..=r), rng.random_range(-r..=r), 0.0, 0.0]
            }
            Dynamics::ChainWalker { segments, .. } => {
                let mut s = vec![0.0f32; 2 * segments];
                for x in s.iter_mut().take(segments) {
                    *x = rng.random_range(-0.1..=0.1);
                }
                s
            }
        }
    }

    /// Proportional-derivative controller towards the task objective.
    /// `target_offset` perturbs the point-mass target per episode.
    pub fn pd_action(&self, state: &[f32], target_offset: [f32; 2]) -> Vec<f32> {
        match self.dynamics {
            Dynamics::PointMass { goal, .. } => (0..2)
                .map(|i| {
                    let target = goal[i] + target_offset[i];
                    (1.5 * (target - state[i]) - 2.0 * state[2 + i]).clamp(-1.0, 1.0)
                })
                .collect(),
            Dynamics::ChainWalker { segments: k, .. } => (0..k)
                .map(|i| (2.0 * (1.0 - state[k + i])).clamp(-1.0, 1.0))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_euler_step() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let (next, _) = env.step(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0]).unwrap();
        let expect = [0.01f32, 0.0, 0.1, 0.0];
        for (a, b) in next.iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{next:?}");
        }
    }

    #[test]
    fn rest_is_fixed_point() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let s = [0.3f32, -0.2, 0.0, 0.0];
        assert_eq!(env.step(&s, &[0.0, 0.0]).unwrap().0, s.to_vec());
        let chain = EnvModel::chain_walker_1d(3);
        let s = [0.0f32; 6];
        assert_eq!(chain.step(&s, &[0.0; 3]).unwrap().0, s.to_vec());
    }

    #[test]
    fn sparse_reward_at_goal() {
        let env = EnvModel::point_mass_2d(RewardKind::Sparse);
        let (_, r) = env.step(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r, 1.0);
        assert_eq!(env.reward(&[0.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn dense_reward_is_negative_distance() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        assert!((env.reward(&[0.5, -0.5, 0.0, 0.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        assert!(matches!(
            env.step(&[f32::NAN, 0.0, 0.0, 0.0], &[0.0, 0.0]),
            Err(Error::RejectedInput(_))
        ));
        assert!(matches!(
            env.step(&[0.0; 4], &[f32::INFINITY, 0.0]),
            Err(Error::RejectedInput(_))
        ));
        assert!(matches!(
            env.step(&[0.0; 4], &[1.5, 0.0]),
            Err(Error::RejectedInput(_))
        ));
        assert!(env.step(&[0.0; 3], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn clamping_bounds() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let (n, _) = env.step(&[0.999, 0.0, 1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(n[2], 1.0);
        assert_eq!(n[0], 1.0);
    }

    #[test]
    fn chain_velocity_reward() {
        let env = EnvModel::chain_walker_1d(2);
        assert_eq!(env.reward(&[0.0, 0.0, 1.0, 0.5]), 0.75);
    }
}
