//! Command line front end: dataset generation, pretraining, evaluation and
//! reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use currmask::runner::{
    gen_data, report_file, run_eval, run_pretraining, DataGenConfig, EvalOptions, RunConfig, RunOptions,
};
use currmask::traj::PolicyMixture;
use currmask::Error;

#[derive(Parser, Debug)]
#[command(name = "currmask", version, about = "Curriculum masked prediction pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trajectory dataset.
    GenData(GenDataArgs),
    /// Pretrain a masked prediction model.
    Pretrain(PretrainArgs),
    /// Evaluate a checkpoint (or the replay oracle) and append to eval.csv.
    Eval(EvalArgs),
    /// Tabulate an eval.csv file.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, default_value = "point_mass_2d")]
    env: String,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 200)]
    episode_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the noisy-PD policy's action noise.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Overwrite dataset files in a non-empty directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long, required_unless_present = "print_config")]
    config: Option<PathBuf>,
    /// Print the full configuration (defaults merged with --config) and exit.
    #[arg(long)]
    print_config: bool,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many steps; the run can be continued with --resume.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required_unless_present = "print_config")]
    config: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
    /// Checkpoint directory; defaults to the run's final checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the replay oracle instead of a trained model.
    #[arg(long)]
    replay_oracle: bool,
    /// Where to append results; defaults to eval.csv in the run directory.
    #[arg(long)]
    eval_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    eval_csv: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(a) => {
            let mut mixture = PolicyMixture::default();
            if let Some(s) = a.noise_std {
                mixture.noise_std = s;
            }
            let cfg = DataGenConfig {
                env: a.env,
                episodes: a.episodes,
                episode_len: a.episode_len,
                seed: a.seed,
                mixture,
            };
            let ds = gen_data(&cfg, &a.out, a.force)?;
            println!(
                "wrote {} episodes ({} tokens) to {}",
                ds.trajectories.len(),
                ds.total_tokens(),
                a.out.display()
            );
        }
        Command::Pretrain(a) => {
            let cfg = load_config(&a.config)?;
            if a.print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let outcome = run_pretraining(
                &cfg,
                &RunOptions {
                    resume: a.resume,
                    stop_after: a.stop_after,
                },
            )?;
            println!(
                "{} at step {} ({} parameters, config {})",
                if outcome.finished { "finished" } else { "stopped" },
                outcome.step,
                outcome.param_count,
                outcome.config_hash
            );
        }
        Command::Eval(a) => {
            let cfg = load_config(&a.config)?;
            if a.print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let rows = run_eval(
                &cfg,
                &EvalOptions {
                    checkpoint: a.checkpoint,
                    replay_oracle: a.replay_oracle,
                    eval_csv: a.eval_csv,
                },
            )?;
            for r in rows {
                println!("{} {} {}: {:.6} ± {:.6} (n={})", r.method, r.task, r.metric, r.mean, r.stderr, r.n);
            }
        }
        Command::Report(a) => print!("{}", report_file(&a.eval_csv)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("CURRMASK_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
