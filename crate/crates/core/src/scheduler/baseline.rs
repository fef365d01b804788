use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sample_categorical;
use crate::error::{Error, Result};
use crate::masking::{MaskKind, MaskPool, MaskScheme};
use crate::rng::Rng;

/// Pretraining method: the EXP3 curriculum or one of the fixed schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    CurrMask,
    /// Uniform over the whole pool.
    Mixed,
    /// Four stages with block pools `{1..5}, {1..10}, {1..15}, {1..20}`.
    MixedProg,
    /// The same stages in reverse order.
    MixedInv,
    /// Token-wise random masking, ratio uniform over the pool ratios.
    MaskDp,
    /// Random-autoregressive masking, ratio uniform over the pool ratios.
    Mtm,
    /// One block size, ratio uniform over the pool ratios.
    Fixed(usize),
}

impl Method {
    pub fn is_curriculum(self) -> bool {
        self == Method::CurrMask
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::CurrMask => f.write_str("currmask"),
            Method::Mixed => f.write_str("mixed"),
            Method::MixedProg => f.write_str("mixed_prog"),
            Method::MixedInv => f.write_str("mixed_inv"),
            Method::MaskDp => f.write_str("maskdp"),
            Method::Mtm => f.write_str("mtm"),
            Method::Fixed(b) => write!(f, "fixed:{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "currmask" => Method::CurrMask,
            "mixed" => Method::Mixed,
            "mixed_prog" => Method::MixedProg,
            "mixed_inv" => Method::MixedInv,
            "maskdp" => Method::MaskDp,
            "mtm" => Method::Mtm,
            other => match other.strip_prefix("fixed:").map(str::parse::<usize>) {
                Some(Ok(b)) if b >= 1 => Method::Fixed(b),
                _ => return Err(Error::Config(format!("unknown method '{other}'"))),
            },
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledScheme {
    /// Pool arm the scheme is logged under.
    pub arm: usize,
    pub scheme: MaskScheme,
    pub kind: MaskKind,
}

/// Index of the training quarter `step` falls in.
fn stage(step: usize, total_steps: usize) -> usize {
    (4 * step / total_steps).min(3)
}

/// Uniform distribution over the arms whose block size passes `keep`.
fn uniform_over(pool: &MaskPool, keep: impl Fn(usize) -> bool) -> Result<Vec<f64>> {
    let allowed: Vec<bool> = pool.schemes().map(|s| keep(s.block)).collect();
    let n = allowed.iter().filter(|&&a| a).count();
    if n == 0 {
        return Err(Error::Param("no pool scheme matches the schedule".into()));
    }
    Ok(allowed
        .into_iter()
        .map(|a| if a { 1.0 / n as f64 } else { 0.0 })
        .collect())
}

/// Distribution over pool arms a fixed schedule draws from at `step`,
/// together with the mask generator it uses.
pub fn baseline_distribution(
    method: Method,
    step: usize,
    total_steps: usize,
    pool: &MaskPool,
) -> Result<(Vec<f64>, MaskKind)> {
    if step >= total_steps {
        return Err(Error::Param(format!("step {step} >= total steps {total_steps}")));
    }
    let max_block = pool.blocks().iter().copied().max().expect("non-empty pool");
    let stage_max = |s: usize| (max_block * (s + 1)).div_ceil(4);
    let block = MaskKind::Block;
    Ok(match method {
        Method::CurrMask => return Err(Error::Param("currmask is not a fixed schedule".into())),
        Method::Mixed => (uniform_over(pool, |_| true)?, block),
        Method::MixedProg => {
            let m = stage_max(stage(step, total_steps));
            (uniform_over(pool, |b| b <= m)?, block)
        }
        Method::MixedInv => {
            let m = stage_max(3 - stage(step, total_steps));
            (uniform_over(pool, |b| b <= m)?, block)
        }
        Method::MaskDp => (uniform_over(pool, |b| b == 1)?, block),
        Method::Mtm => (uniform_over(pool, |b| b == 1)?, MaskKind::RandomAutoregressive),
        Method::Fixed(size) => (uniform_over(pool, |b| b == size)?, block),
    })
}

/// Next masking scheme for a non-adaptive schedule at training `step`:
/// one inverse-CDF draw from [`baseline_distribution`].
pub fn baseline_next_scheme(
    method: Method,
    step: usize,
    total_steps: usize,
    pool: &MaskPool,
    rng: &mut Rng,
) -> Result<ScheduledScheme> {
    let (probs, kind) = baseline_distribution(method, step, total_steps, pool)?;
    let arm = sample_categorical(&probs, rng);
    Ok(ScheduledScheme {
        arm,
        scheme: pool.scheme(arm),
        kind,
    })
}
