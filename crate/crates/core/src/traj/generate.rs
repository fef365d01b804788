use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EnvModel, NormStats, Trajectory};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::seeded;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTier {
    Random,
    NoisyPd,
    Pd,
}

/// Fractions of episodes collected by each policy tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMixture {
    pub random: f64,
    pub noisy_pd: f64,
    pub pd: f64,
    pub noise_std: f64,
}

impl Default for PolicyMixture {
    fn default() -> Self {
        PolicyMixture {
            random: 1.0 / 3.0,
            noisy_pd: 1.0 / 3.0,
            pd: 1.0 / 3.0,
            noise_std: 0.3,
        }
    }
}

impl PolicyMixture {
    pub fn only(tier: PolicyTier) -> Self {
        let mut m = PolicyMixture {
            random: 0.0,
            noisy_pd: 0.0,
            pd: 0.0,
            noise_std: 0.3,
        };
        match tier {
            PolicyTier::Random => m.random = 1.0,
            PolicyTier::NoisyPd => m.noisy_pd = 1.0,
            PolicyTier::Pd => m.pd = 1.0,
        }
        m
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.random, self.noisy_pd, self.pd];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("policy mixture must sum to 1: {parts:?}")));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::Param("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Tier of episode `idx` out of `n`: contiguous blocks in the order
    /// random, noisy-PD, PD, sized by the mixture fractions.
    pub fn tier_of(&self, idx: usize, n: usize) -> PolicyTier {
        let u = (idx as f64 + 0.5) / n as f64;
        if u < self.random {
            PolicyTier::Random
        } else if u < self.random + self.noisy_pd {
            PolicyTier::NoisyPd
        } else {
            PolicyTier::Pd
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub env_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub episodes: usize,
    pub episode_len: usize,
    pub seed: u64,
    pub policy_mixture: PolicyMixture,
    pub episode_policies: Vec<PolicyTier>,
    pub norm_stats: NormStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn total_tokens(&self) -> usize {
        self.trajectories.iter().map(|t| 2 * t.len()).sum()
    }
}

fn rollout_episode(
    env: &EnvModel,
    tier: PolicyTier,
    noise_std: f64,
    len: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, noise_std.max(1e-12))
        .map_err(|e| Error::Param(format!("noise distribution: {e}")))?;
    let target_noise = Normal::new(0.0f32, 0.05).expect("valid constant");
    let (ds, da) = (env.state_dim(), env.action_dim());
    let mut state = env.initial_state(&mut rng);
    let offset = [target_noise.sample(&mut rng), target_noise.sample(&mut rng)];
    let mut states = Vec::with_capacity(len * ds);
    let mut actions = Vec::with_capacity(len * da);
    for _ in 0..len {
        let action: Vec<f32> = match tier {
            PolicyTier::Random => (0..da).map(|_| rng.random_range(-1.0f32..=1.0)).collect(),
            PolicyTier::Pd => env.pd_action(&state, offset),
            PolicyTier::NoisyPd => env
                .pd_action(&state, offset)
                .into_iter()
                .map(|a| (f64::from(a) + noise.sample(&mut rng)).clamp(-1.0, 1.0) as f32)
                .collect(),
        };
        states.extend_from_slice(&state);
        actions.extend_from_slice(&action);
        state = env.step(&state, &action)?.0;
    }
    Trajectory::new(states, actions, ds, da, env.env_id.clone(), seed)
}

/// Simulate `n_episodes` episodes of `episode_len` steps. Episode `i` uses
/// its own stream seeded with `seed + i`.
pub fn generate_dataset(
    env: &EnvModel,
    mixture: &PolicyMixture,
    n_episodes: usize,
    episode_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_episodes == 0 {
        return Err(Error::Param("n_episodes must be >= 1".into()));
    }
    if episode_len < 2 {
        return Err(Error::Param("episode_len must be >= 2".into()));
    }
    mixture.validate()?;
    let tiers: Vec<PolicyTier> = (0..n_episodes)
        .map(|i| mixture.tier_of(i, n_episodes))
        .collect();
    let trajectories = par::try_map_range(n_episodes, |i| {
        rollout_episode(
            env,
            tiers[i],
            mixture.noise_std,
            episode_len,
            seed.wrapping_add(i as u64),
        )
    })?;
    let norm_stats = NormStats::compute(&trajectories)?;
    Ok(Dataset {
        manifest: DatasetManifest {
            version: FORMAT_VERSION,
            env_id: env.env_id.clone(),
            state_dim: env.state_dim(),
            action_dim: env.action_dim(),
            episodes: n_episodes,
            episode_len,
            seed,
            policy_mixture: mixture.clone(),
            episode_policies: tiers,
            norm_stats,
        },
        trajectories,
    })
}

/// Sum of rewards over the recorded transitions `s_t -> s_{t+1}`.
pub fn episode_reward(env: &EnvModel, traj: &Trajectory) -> f64 {
    (1..traj.len()).map(|t| env.reward(traj.state(t))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::RewardKind;

    #[test]
    fn zero_episodes_rejected() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        assert!(matches!(
            generate_dataset(&env, &PolicyMixture::default(), 0, 10, 0),
            Err(Error::Param(_))
        ));
        assert!(generate_dataset(&env, &PolicyMixture::default(), 1, 1, 0).is_err());
    }

    #[test]
    fn thirds_are_exact() {
        let m = PolicyMixture::default();
        let tiers: Vec<_> = (0..9).map(|i| m.tier_of(i, 9)).collect();
        assert_eq!(tiers.iter().filter(|t| **t == PolicyTier::Random).count(), 3);
        assert_eq!(tiers.iter().filter(|t| **t == PolicyTier::NoisyPd).count(), 3);
        assert_eq!(tiers.iter().filter(|t| **t == PolicyTier::Pd).count(), 3);
    }

    #[test]
    fn deterministic_generation() {
        let env = EnvModel::chain_walker_1d(3);
        let a = generate_dataset(&env, &PolicyMixture::default(), 4, 30, 5).unwrap();
        let b = generate_dataset(&env, &PolicyMixture::default(), 4, 30, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&env, &PolicyMixture::default(), 4, 30, 6).unwrap();
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn recorded_states_follow_dynamics() {
        let env = EnvModel::point_mass_2d(RewardKind::Dense);
        let d = generate_dataset(&env, &PolicyMixture::default(), 3, 50, 1).unwrap();
        for tr in &d.trajectories {
            for t in 0..tr.len() - 1 {
                let (next, _) = env.step(tr.state(t), tr.action(t)).unwrap();
                assert_eq!(next.as_slice(), tr.state(t + 1));
            }
        }
    }
}
