use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::pretrain::{load_norm_stats, FINAL_DIR};
use crate::error::{Error, Result};
use crate::eval::{
    append_eval_rows, goal_planning_eval, skill_prompting_eval, ActionModel, EvalRow, NetActionModel, ReplayOracle,
};
use crate::learner::net::load_checkpoint;
use crate::traj::{read_dataset, EnvModel};

pub const EVAL_CSV: &str = "eval.csv";

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Checkpoint directory; defaults to the run's final checkpoint.
    pub checkpoint: Option<PathBuf>,
    /// Score the replay oracle instead of a network.
    pub replay_oracle: bool,
    /// Output file; defaults to `eval.csv` in the run directory.
    pub eval_csv: Option<PathBuf>,
}

fn rows_for<M: ActionModel + ?Sized>(
    model: &M,
    env: &EnvModel,
    cfg: &RunConfig,
    validation: &[crate::traj::Trajectory],
    method: &str,
) -> Result<Vec<EvalRow>> {
    let run_id = cfg.run_id();
    let seed = cfg.eval.seed;
    let row = |task: &str, metric: String, mean: f64, stderr: f64, n: usize| EvalRow {
        run_id: run_id.clone(),
        method: method.to_string(),
        task: task.to_string(),
        metric,
        mean,
        stderr,
        n,
        seed_base: seed,
    };
    let mut rows = Vec::new();
    if cfg.eval.skill_prompting {
        let s = skill_prompting_eval(model, env, validation, &cfg.eval.prompting, seed)?;
        rows.push(row("skill_prompting", "reward".into(), s.mean, s.stderr, s.episodes.len()));
    }
    if cfg.eval.goal_planning {
        let s = goal_planning_eval(model, env, validation, &cfg.eval.planning, seed)?;
        let n = s.episodes.len();
        rows.push(row("goal_planning", "distance".into(), s.mean, s.stderr, n));
        for (j, g) in s.goal_steps.iter().enumerate() {
            rows.push(row(
                "goal_planning",
                format!("distance_t{g}"),
                s.per_goal_mean[j],
                s.per_goal_stderr[j],
                n,
            ));
        }
    }
    for r in &rows {
        if !r.mean.is_finite() {
            return Err(Error::NonFinite {
                step: 0,
                detail: format!("{} {} evaluated to {}", r.task, r.metric, r.mean),
            });
        }
    }
    Ok(rows)
}

/// Run the configured evaluation suites and append their summaries to
/// `eval.csv`. Returns the appended rows.
pub fn run_eval(cfg: &RunConfig, opts: &EvalOptions) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    let val_dir = &cfg.data.validation_dir;
    if !val_dir.is_dir() {
        return Err(Error::Data(format!("validation directory {} does not exist", val_dir.display())));
    }
    let validation = read_dataset(val_dir)?;
    let env = EnvModel::from_id(&validation.manifest.env_id)?;
    let trajs = &validation.trajectories;
    let rows = if opts.replay_oracle {
        let oracle = ReplayOracle {
            trajectories: trajs,
            context_timesteps: cfg.net.window_timesteps(),
        };
        rows_for(&oracle, &env, cfg, trajs, "replay_oracle")?
    } else {
        let dir = opts.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join(FINAL_DIR));
        if !dir.join(crate::learner::net::MODEL_FILE).is_file() {
            return Err(Error::Data(format!("no checkpoint at {}", dir.display())));
        }
        let ck = load_checkpoint(&dir)?;
        let expected = cfg
            .net
            .to_config(validation.manifest.state_dim, validation.manifest.action_dim);
        if ck.manifest.net != expected {
            return Err(Error::Config(format!(
                "checkpoint architecture {:?} does not match the config {:?}",
                ck.manifest.net, expected
            )));
        }
        let stats = load_norm_stats(&dir)?;
        let model = NetActionModel {
            net: &ck.net,
            stats: &stats,
        };
        rows_for(&model, &env, cfg, trajs, &cfg.method.to_string())?
    };
    let path = opts.eval_csv.clone().unwrap_or_else(|| cfg.output_dir.join(EVAL_CSV));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    append_eval_rows(&path, &rows)?;
    Ok(rows)
}

/// Table of `mean ± stderr` per (task, metric) row and method column. Rows
/// sharing a method, task and metric (several runs or seeds) are pooled by
/// averaging their means; the stderr shown is that of those means when
/// there are several, else the single row's own stderr.
pub fn report(rows: &[EvalRow]) -> String {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let mut cells: BTreeMap<(&str, &str), BTreeMap<&str, Vec<&EvalRow>>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.task.as_str(), r.metric.as_str()))
            .or_default()
            .entry(r.method.as_str())
            .or_default()
            .push(r);
    }
    let mut table = vec![std::iter::once("task/metric".to_string())
        .chain(methods.iter().map(|m| m.to_string()))
        .collect::<Vec<_>>()];
    for ((task, metric), by_method) in &cells {
        let mut line = vec![format!("{task}/{metric}")];
        for m in &methods {
            line.push(match by_method.get(m) {
                None => "-".into(),
                Some(rs) if rs.len() == 1 => format!("{:.4} ± {:.4}", rs[0].mean, rs[0].stderr),
                Some(rs) => {
                    let means: Vec<f64> = rs.iter().map(|r| r.mean).collect();
                    let (mean, se) = crate::stats::mean_stderr(&means);
                    format!("{mean:.4} ± {se:.4} (k={})", rs.len())
                }
            });
        }
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &table {
        let cols: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(cols.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn report_file(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    Ok(report(&crate::eval::read_eval_rows(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, mean: f64) -> EvalRow {
        EvalRow {
            run_id: "r".into(),
            method: method.into(),
            task: "skill_prompting".into(),
            metric: "reward".into(),
            mean,
            stderr: 0.5,
            n: 10,
            seed_base: 0,
        }
    }

    #[test]
    fn report_pools_runs() {
        let text = report(&[row("currmask", 1.0), row("currmask", 3.0), row("maskdp", 2.0)]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("task/metric"));
        assert!(lines[1].contains("2.0000 ± 1.0000 (k=2)"));
        assert!(lines[1].contains("2.0000 ± 0.5000"));
    }
}
