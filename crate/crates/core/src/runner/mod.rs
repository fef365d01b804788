//! Experiment orchestration: configuration, dataset generation, the
//! pretraining loop with checkpoints and metrics, evaluation and reports.

mod config;
mod data;
mod evaluate;
mod metrics;
mod pretrain;

pub use config::{
    DataSection, EvalSection, NetSection, PoolSection, RunConfig, SchedulerSection, TrainSection,
};
pub use data::{gen_data, DataGenConfig};
pub use evaluate::{report, report_file, run_eval, EvalOptions, EVAL_CSV};
pub use metrics::{
    csv_header, probability_columns, read_config_hash, read_metrics_jsonl, MetricsRecord, METRICS_CSV,
    METRICS_JSONL,
};
pub use pretrain::{
    latest_checkpoint, load_norm_stats, load_run_data, run_pretraining, RunData, RunManifest, RunOptions,
    RunOutcome, CHECKPOINT_DIR, FINAL_DIR, MANIFEST_FILE,
};
