use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::error::{Error, Result};
use crate::learner::net::{load_checkpoint, save_checkpoint};
use crate::learner::{Batch, Learner, MaskedPredictionNet, NetLearner};
use crate::masking::{generate, MaskKind, MaskMatrix, MaskPool};
use crate::rng::{component_rng, Rng, RngState};
use crate::scheduler::{
    baseline_distribution, baseline_next_scheme, Method, ProgressSnapshot, SchedulerState, TargetProbe,
};
use crate::traj::{read_dataset, sample_window, Dataset, NormStats, Trajectory, Window};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_DIR: &str = "final";
pub const STATE_FILE: &str = "state.json";
pub const NORM_FILE: &str = "norm_stats.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Controls that change how far a run gets, not what it computes.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from the latest checkpoint in the output directory.
    pub resume: bool,
    /// Stop right after this step, as if the process had been killed.
    pub stop_after: Option<usize>,
}

/// Resumable loop state stored next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    config_hash: String,
    step: usize,
    scheduler: SchedulerState,
    current_arm: usize,
    current_kind: MaskKind,
    loss_before: Option<f64>,
    scheduler_rng: RngState,
    batch_rng: RngState,
    wallclock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    pub steps: usize,
    pub param_count: usize,
    pub final_checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub metrics_jsonl: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config_hash: String,
    /// Last completed training step.
    pub step: usize,
    pub finished: bool,
    pub param_count: usize,
}

/// Datasets, statistics and pool shared by training and evaluation.
pub struct RunData {
    pub train: Dataset,
    pub validation: Dataset,
    pub stats: NormStats,
    pub pool: MaskPool,
}

pub fn load_run_data(cfg: &RunConfig) -> Result<RunData> {
    for dir in [&cfg.data.train_dir, &cfg.data.validation_dir] {
        if !dir.is_dir() {
            return Err(Error::Data(format!("dataset directory {} does not exist", dir.display())));
        }
    }
    let train = read_dataset(&cfg.data.train_dir)?;
    let validation = read_dataset(&cfg.data.validation_dir)?;
    let (t, v) = (&train.manifest, &validation.manifest);
    if t.env_id != v.env_id || t.state_dim != v.state_dim || t.action_dim != v.action_dim {
        return Err(Error::Data(format!(
            "train ({}, {}x{}) and validation ({}, {}x{}) datasets disagree",
            t.env_id, t.state_dim, t.action_dim, v.env_id, v.state_dim, v.action_dim
        )));
    }
    let window = cfg.net.window_timesteps();
    for (name, ds) in [("train", &train), ("validation", &validation)] {
        if let Some(short) = ds.trajectories.iter().find(|tr| tr.len() < window) {
            return Err(Error::Data(format!(
                "{name} episode of {} steps is shorter than the {window}-step context",
                short.len()
            )));
        }
    }
    let stats = train.manifest.norm_stats.clone();
    Ok(RunData {
        train,
        validation,
        stats,
        pool: cfg.pool()?,
    })
}

#[allow(clippy::too_many_arguments)]
fn sample_batch(
    trajectories: &[Trajectory],
    stats: &NormStats,
    pool: &MaskPool,
    arm: usize,
    kind: MaskKind,
    batch_size: usize,
    window: usize,
    full_blocks: bool,
    rng: &mut Rng,
) -> Result<(Vec<Window>, Vec<MaskMatrix>)> {
    let scheme = pool.scheme(arm);
    let mut windows = Vec::with_capacity(batch_size);
    let mut masks = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let traj = &trajectories[rng.random_range(0..trajectories.len())];
        let w = sample_window(traj, window, rng)?;
        masks.push(generate(kind, scheme, w.token_len(), full_blocks, rng)?);
        windows.push(stats.normalize(&w)?);
    }
    Ok((windows, masks))
}

fn checkpoint_dir(out: &Path, step: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("step_{step:08}"))
}

/// Most recent complete checkpoint in a run directory.
pub fn latest_checkpoint(out: &Path) -> Result<Option<(usize, PathBuf)>> {
    let root = out.join(CHECKPOINT_DIR);
    if !root.is_dir() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
        let path = entry.map_err(|e| Error::io(&root, e))?.path();
        let step = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step_"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(step) = step {
            if path.join(STATE_FILE).is_file() && best.as_ref().is_none_or(|(s, _)| step > *s) {
                best = Some((step, path));
            }
        }
    }
    Ok(best)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn save_model(dir: &Path, learner: &NetLearner, stats: &NormStats, step: usize) -> Result<()> {
    save_checkpoint(dir, &learner.net, Some(&learner.optimizer), step)?;
    write_json(&dir.join(NORM_FILE), stats)
}

pub fn load_norm_stats(dir: &Path) -> Result<NormStats> {
    read_json(&dir.join(NORM_FILE))
}

/// Run the masked prediction pretraining loop described by `cfg`.
///
/// Every `interval` steps the curriculum evaluates the target loss on a
/// fixed validation probe and updates its arm weights; fixed schedules
/// redraw their scheme. Each interval appends one metrics record.
pub fn run_pretraining(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = load_run_data(cfg)?;
    let hash = cfg.hash();
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let net_cfg = cfg.net.to_config(data.train.manifest.state_dim, data.train.manifest.action_dim);
    let pool = &data.pool;
    let window = cfg.net.window_timesteps();
    let sc = &cfg.scheduler;
    let curriculum = cfg.method.is_curriculum();

    let mut learner = NetLearner::new(
        MaskedPredictionNet::new(net_cfg, &mut component_rng(cfg.seed, "init"))?,
        cfg.train.lr,
    );
    let probe = if curriculum {
        let mut rng = component_rng(cfg.seed, "target_probe");
        let arms = TargetProbe::subsample_arms(pool.len(), sc.eval_scheme_subsample.unwrap_or(pool.len()), &mut rng);
        Some(TargetProbe::build(
            &data.validation.trajectories,
            &data.stats,
            pool,
            &arms,
            sc.eval_samples,
            window,
            cfg.pool.full_blocks,
            &mut rng,
        )?)
    } else {
        None
    };

    let resumed = if opts.resume { latest_checkpoint(out)? } else { None };
    let (mut state, mut sched_rng, mut batch_rng, mut metrics) = match resumed {
        Some((step, dir)) => {
            let st: TrainState = read_json(&dir.join(STATE_FILE))?;
            if st.config_hash != hash {
                return Err(Error::Config(format!(
                    "checkpoint {} belongs to config {} but this config hashes to {hash}",
                    dir.display(),
                    st.config_hash
                )));
            }
            let ck = load_checkpoint(&dir)?;
            learner.restore((
                ck.net,
                ck.optimizer
                    .ok_or_else(|| Error::Data(format!("{} lacks optimizer state", dir.display())))?,
            ))?;
            let restore = |r: &RngState| {
                r.restore()
                    .ok_or_else(|| Error::Data(format!("bad rng state in {}", dir.display())))
            };
            let (s, b) = (restore(&st.scheduler_rng)?, restore(&st.batch_rng)?);
            log::info!("resuming {} from step {step}", out.display());
            (st, s, b, MetricsWriter::resume(out, &hash, step)?)
        }
        None => {
            let mut sched_rng = component_rng(cfg.seed, "scheduler");
            let batch_rng = component_rng(cfg.seed, "train_batches");
            let mut scheduler = SchedulerState::new(pool.len(), sc.epsilon, sc.gamma)?;
            scheduler.percentile_window = sc.percentile_window;
            let (current_arm, current_kind, loss_before) = if curriculum {
                let arm = scheduler.sample_arm(&mut sched_rng);
                scheduler.current_arm = arm;
                let before = probe.as_ref().expect("curriculum has a probe").evaluate(&learner)?;
                (arm, MaskKind::Block, Some(before))
            } else {
                let s = baseline_next_scheme(cfg.method, 0, cfg.steps, pool, &mut sched_rng)?;
                (s.arm, s.kind, None)
            };
            fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(out, e))?;
            let state = TrainState {
                config_hash: hash.clone(),
                step: 0,
                scheduler,
                current_arm,
                current_kind,
                loss_before,
                scheduler_rng: RngState::capture(&sched_rng),
                batch_rng: RngState::capture(&batch_rng),
                wallclock: 0.0,
            };
            (state, sched_rng, batch_rng, MetricsWriter::create(out, &hash, pool)?)
        }
    };

    let clock = Instant::now();
    let offset = state.wallclock;
    let wallclock = |rec: bool| if rec { offset + clock.elapsed().as_secs_f64() } else { 0.0 };
    let param_count = learner.net.param_count();
    log::info!("{} parameters, method {}, {} steps", param_count, cfg.method, cfg.steps);

    for step in state.step..cfg.steps {
        if !curriculum && step % sc.interval == 0 && step > 0 {
            let s = baseline_next_scheme(cfg.method, step, cfg.steps, pool, &mut sched_rng)?;
            state.current_arm = s.arm;
            state.current_kind = s.kind;
        }
        let (windows, masks) = sample_batch(
            &data.train.trajectories,
            &data.stats,
            pool,
            state.current_arm,
            state.current_kind,
            cfg.train.batch_size,
            window,
            cfg.pool.full_blocks,
            &mut batch_rng,
        )?;
        let loss = learner.train_step(&Batch {
            arm: state.current_arm,
            windows: &windows,
            masks: &masks,
        })?;
        let done = step + 1;
        state.step = done;
        if done % sc.interval == 0 {
            let trained = state.current_arm;
            let scheme = pool.scheme(trained);
            let rec = if let Some(probe) = &probe {
                let before = state.loss_before.expect("curriculum tracks the target loss");
                let after = probe.evaluate(&learner)?;
                let upd = state.scheduler.curriculum_step(
                    &ProgressSnapshot {
                        step: done,
                        loss_before: before,
                        loss_after: after,
                    },
                    &mut sched_rng,
                )?;
                state.current_arm = upd.next_arm;
                state.loss_before = Some(after);
                MetricsRecord {
                    step: done,
                    wallclock: wallclock(cfg.record_wallclock),
                    arm_index: upd.pulled_arm,
                    ratio: scheme.ratio,
                    block: scheme.block,
                    raw_reward: Some(upd.raw_reward),
                    scaled_reward: Some(upd.scaled_reward),
                    loss_before: Some(before),
                    loss_after: Some(after),
                    probabilities: upd.probabilities,
                }
            } else {
                let next = done.min(cfg.steps - 1);
                MetricsRecord {
                    step: done,
                    wallclock: wallclock(cfg.record_wallclock),
                    arm_index: trained,
                    ratio: scheme.ratio,
                    block: scheme.block,
                    raw_reward: None,
                    scaled_reward: None,
                    loss_before: None,
                    loss_after: None,
                    probabilities: baseline_distribution(cfg.method, next, cfg.steps, pool)?.0,
                }
            };
            log::debug!("step {done}: train loss {loss:.5}, arm {trained}");
            metrics.write(&rec)?;
        }
        let checkpoint_now = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps;
        if checkpoint_now {
            state.scheduler_rng = RngState::capture(&sched_rng);
            state.batch_rng = RngState::capture(&batch_rng);
            state.wallclock = wallclock(true);
            let dir = checkpoint_dir(out, done);
            save_model(&dir, &learner, &data.stats, done)?;
            write_json(&dir.join(STATE_FILE), &state)?;
        }
        if opts.stop_after == Some(done) && done < cfg.steps {
            return Ok(RunOutcome {
                config_hash: hash,
                step: done,
                finished: false,
                param_count,
            });
        }
    }

    let final_dir = out.join(FINAL_DIR);
    save_model(&final_dir, &learner, &data.stats, cfg.steps)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            config_hash: hash.clone(),
            method: cfg.method,
            seed: cfg.seed,
            steps: cfg.steps,
            param_count,
            final_checkpoint: PathBuf::from(FINAL_DIR),
            metrics_csv: PathBuf::from(super::metrics::METRICS_CSV),
            metrics_jsonl: PathBuf::from(super::metrics::METRICS_JSONL),
        },
    )?;
    Ok(RunOutcome {
        config_hash: hash,
        step: cfg.steps,
        finished: true,
        param_count,
    })
}
