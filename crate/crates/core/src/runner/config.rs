use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{GoalPlanConfig, PromptConfig};
use crate::learner::NetConfig;
use crate::masking::{MaskPool, DEFAULT_MAX_BLOCK, DEFAULT_RATIOS};
use crate::scheduler::Method;

/// One pretraining run and its evaluation. Every field has a default, so a
/// config file only lists what it changes; `default_toml` dumps the full
/// schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    /// Total training steps.
    pub steps: usize,
    pub output_dir: PathBuf,
    /// Write checkpoints every this many steps (a multiple of the
    /// evaluation interval); 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// When false the wallclock column is written as 0 so reruns are
    /// byte-identical.
    pub record_wallclock: bool,
    pub data: DataSection,
    pub pool: PoolSection,
    pub net: NetSection,
    pub train: TrainSection,
    pub scheduler: SchedulerSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_dir: PathBuf,
    pub validation_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolSection {
    pub ratios: Vec<f64>,
    pub blocks: Vec<usize>,
    /// Mask whole blocks instead of `b - 1` tokens per block.
    pub full_blocks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub hidden: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ff_mult: usize,
    pub context_tokens: usize,
    pub loss_on_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub epsilon: f64,
    pub gamma: f64,
    /// Training steps per curriculum update.
    pub interval: usize,
    /// Validation windows per scheme in the target loss.
    pub eval_samples: usize,
    /// Evaluate the target loss on a fixed random subset of this many
    /// schemes instead of the whole pool.
    pub eval_scheme_subsample: Option<usize>,
    /// Rescale rewards against only the most recent entries.
    pub percentile_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub seed: u64,
    pub skill_prompting: bool,
    pub goal_planning: bool,
    pub prompting: PromptConfig,
    pub planning: GoalPlanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::CurrMask,
            seed: 0,
            steps: 20_000,
            output_dir: PathBuf::from("runs/currmask"),
            checkpoint_every: 1000,
            record_wallclock: true,
            data: DataSection::default(),
            pool: PoolSection::default(),
            net: NetSection::default(),
            train: TrainSection::default(),
            scheduler: SchedulerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_dir: PathBuf::from("data/train"),
            validation_dir: PathBuf::from("data/validation"),
        }
    }
}

impl Default for PoolSection {
    fn default() -> Self {
        PoolSection {
            ratios: DEFAULT_RATIOS.to_vec(),
            blocks: (1..=DEFAULT_MAX_BLOCK).collect(),
            full_blocks: false,
        }
    }
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection::from(&NetConfig::desk(1, 1))
    }
}

impl From<&NetConfig> for NetSection {
    fn from(c: &NetConfig) -> Self {
        NetSection {
            hidden: c.hidden,
            heads: c.heads,
            enc_layers: c.enc_layers,
            dec_layers: c.dec_layers,
            ff_mult: c.ff_mult,
            context_tokens: c.context_tokens,
            loss_on_all: c.loss_on_all,
        }
    }
}

impl NetSection {
    pub fn to_config(&self, state_dim: usize, action_dim: usize) -> NetConfig {
        NetConfig {
            state_dim,
            action_dim,
            hidden: self.hidden,
            heads: self.heads,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            ff_mult: self.ff_mult,
            context_tokens: self.context_tokens,
            loss_on_all: self.loss_on_all,
        }
    }

    pub fn window_timesteps(&self) -> usize {
        self.context_tokens / 2
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 1e-4,
            batch_size: 8,
        }
    }
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            epsilon: 0.2,
            gamma: 0.1,
            interval: 100,
            eval_samples: 10,
            eval_scheme_subsample: None,
            percentile_window: None,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seed: 0,
            skill_prompting: true,
            goal_planning: true,
            prompting: PromptConfig::default(),
            planning: GoalPlanConfig::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data.train_dir, &mut cfg.data.validation_dir, &mut cfg.output_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn default_toml() -> String {
        RunConfig::default().to_toml()
    }

    pub fn pool(&self) -> Result<MaskPool> {
        MaskPool::new(self.pool.ratios.clone(), self.pool.blocks.clone()).map_err(|e| cfg_err(e.to_string()))
    }

    /// Static checks that need no file system access.
    pub fn validate(&self) -> Result<()> {
        self.pool()?;
        if self.steps == 0 {
            return Err(cfg_err("steps must be >= 1"));
        }
        let s = &self.scheduler;
        if s.interval == 0 || s.eval_samples == 0 {
            return Err(cfg_err("scheduler.interval and scheduler.eval_samples must be >= 1"));
        }
        if !(0.0..=1.0).contains(&s.epsilon) || !s.gamma.is_finite() || s.gamma < 0.0 {
            return Err(cfg_err("scheduler.epsilon must lie in [0, 1] and gamma be >= 0"));
        }
        if s.eval_scheme_subsample == Some(0) || s.percentile_window == Some(0) {
            return Err(cfg_err("eval_scheme_subsample and percentile_window must be >= 1 when set"));
        }
        if !self.checkpoint_every.is_multiple_of(s.interval) {
            return Err(cfg_err(format!(
                "checkpoint_every {} must be a multiple of the interval {}",
                self.checkpoint_every, s.interval
            )));
        }
        if !(self.train.lr.is_finite() && self.train.lr >= 0.0) || self.train.batch_size == 0 {
            return Err(cfg_err("train.lr must be >= 0 and train.batch_size >= 1"));
        }
        self.net.to_config(1, 1).validate()?;
        let blocks = &self.pool.blocks;
        let needs = match self.method {
            Method::MaskDp | Method::Mtm => Some(1),
            Method::Fixed(b) => Some(b),
            _ => None,
        };
        if let Some(b) = needs {
            if !blocks.contains(&b) {
                return Err(cfg_err(format!("method {} needs block size {b} in the pool", self.method)));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of everything that affects the
    /// emitted numbers. The output directory and wallclock switch are
    /// excluded so a run can be moved or replayed.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.record_wallclock = false;
        canon.eval = EvalSection::default();
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short identifier used in `eval.csv`.
    pub fn run_id(&self) -> String {
        self.hash()[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = RunConfig::default_toml();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml_str("method = \"fixed:4\"\n[train]\nlr = 0.001\n").unwrap();
        assert_eq!(cfg.method, Method::Fixed(4));
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.scheduler.interval, 100);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "method = \"nope\"",
            "steps = 0",
            "unknown_key = 1",
            "[scheduler]\nepsilon = 1.5",
            "checkpoint_every = 150",
            "method = \"fixed:30\"",
            "[net]\nhidden = 10\nheads = 4",
        ] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.record_wallclock = false;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
