use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::learner::{Batch, Learner};
use crate::masking::{generate, MaskKind, MaskMatrix, MaskPool};
use crate::par;
use crate::rng::Rng;
use crate::traj::{sample_window, NormStats, Trajectory, Window};

/// Fixed validation windows and masks, one group per evaluated arm.
///
/// Building the probe once and reusing it for every evaluation gives the
/// before/after losses of an interval common random numbers, so the raw
/// reward reflects the parameter update rather than sampling noise.
#[derive(Debug, Clone)]
pub struct TargetProbe {
    groups: Vec<ProbeGroup>,
}

#[derive(Debug, Clone)]
struct ProbeGroup {
    arm: usize,
    windows: Vec<Window>,
    masks: Vec<MaskMatrix>,
}

impl TargetProbe {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        validation: &[Trajectory],
        stats: &NormStats,
        pool: &MaskPool,
        arms: &[usize],
        n_samples: usize,
        window_timesteps: usize,
        full_blocks: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if validation.is_empty() {
            return Err(Error::Data("empty validation set".into()));
        }
        if n_samples == 0 {
            return Err(Error::Param("target loss needs at least one sample".into()));
        }
        if arms.is_empty() || arms.iter().any(|&a| a >= pool.len()) {
            return Err(Error::Param("target probe arms must be a non-empty subset of the pool".into()));
        }
        let mut groups = Vec::with_capacity(arms.len());
        for &arm in arms {
            let scheme = pool.scheme(arm);
            let mut windows = Vec::with_capacity(n_samples);
            let mut masks = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                let traj = &validation[rng.random_range(0..validation.len())];
                let w = sample_window(traj, window_timesteps, rng)?;
                masks.push(generate(MaskKind::Block, scheme, w.token_len(), full_blocks, rng)?);
                windows.push(stats.normalize(&w)?);
            }
            groups.push(ProbeGroup { arm, windows, masks });
        }
        Ok(TargetProbe { groups })
    }

    /// A sorted random subset of `count` arms out of `pool_len`.
    pub fn subsample_arms(pool_len: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
        if count >= pool_len {
            return (0..pool_len).collect();
        }
        let mut arms = index::sample(rng, pool_len, count).into_vec();
        arms.sort_unstable();
        arms
    }

    pub fn arms(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.arm).collect()
    }

    /// Per-arm losses, in probe order.
    pub fn arm_losses<L: Learner>(&self, learner: &L) -> Result<Vec<f64>> {
        par::map_slice(&self.groups, |g| {
            learner.eval_loss(&Batch {
                arm: g.arm,
                windows: &g.windows,
                masks: &g.masks,
            })
        })
        .into_iter()
        .collect()
    }

    /// Mean over the probed arms of the learner's masked prediction loss.
    pub fn evaluate<L: Learner>(&self, learner: &L) -> Result<f64> {
        let losses = self.arm_losses(learner)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

/// Target loss over every scheme of the pool with `n_samples` validation
/// windows per scheme.
#[allow(clippy::too_many_arguments)]
pub fn compute_target_loss<L: Learner>(
    learner: &L,
    validation: &[Trajectory],
    stats: &NormStats,
    pool: &MaskPool,
    n_samples: usize,
    window_timesteps: usize,
    full_blocks: bool,
    rng: &mut Rng,
) -> Result<f64> {
    let arms: Vec<usize> = (0..pool.len()).collect();
    TargetProbe::build(validation, stats, pool, &arms, n_samples, window_timesteps, full_blocks, rng)?
        .evaluate(learner)
}
