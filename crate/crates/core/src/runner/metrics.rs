use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskPool;

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";

/// One evaluation-interval record. Loss and reward fields are empty for
/// schedules that do not probe the target loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub wallclock: f64,
    pub arm_index: usize,
    pub ratio: f64,
    pub block: usize,
    pub raw_reward: Option<f64>,
    pub scaled_reward: Option<f64>,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    /// Probability of each pool arm for the next draw.
    pub probabilities: Vec<f64>,
}

/// Probability column names, e.g. `p_r0.15_b1`, in arm order.
pub fn probability_columns(pool: &MaskPool) -> Vec<String> {
    pool.schemes().map(|s| format!("p_r{}_b{}", s.ratio, s.block)).collect()
}

pub fn csv_header(pool: &MaskPool) -> Vec<String> {
    let fixed = [
        "step",
        "wallclock",
        "arm_index",
        "ratio",
        "block",
        "raw_reward",
        "scaled_reward",
        "loss_before",
        "loss_after",
    ];
    fixed.iter().map(|s| s.to_string()).chain(probability_columns(pool)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRecord {
    fn csv_fields(&self) -> Vec<String> {
        let mut out = vec![
            self.step.to_string(),
            self.wallclock.to_string(),
            self.arm_index.to_string(),
            self.ratio.to_string(),
            self.block.to_string(),
            opt(self.raw_reward),
            opt(self.scaled_reward),
            opt(self.loss_before),
            opt(self.loss_after),
        ];
        out.extend(self.probabilities.iter().map(|p| p.to_string()));
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlHeader {
    config_hash: String,
    columns: Vec<String>,
}

/// Appends records to `metrics.csv` and `metrics.jsonl` in a run directory.
/// The first line of each file carries the config hash.
pub struct MetricsWriter {
    csv: csv::Writer<File>,
    jsonl: File,
    jsonl_path: PathBuf,
}

impl MetricsWriter {
    /// Start fresh files.
    pub fn create(dir: &Path, config_hash: &str, pool: &MaskPool) -> Result<Self> {
        let csv_path = dir.join(METRICS_CSV);
        let mut file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        writeln!(file, "# config_hash={config_hash}").map_err(|e| Error::io(&csv_path, e))?;
        let mut csv = csv::Writer::from_writer(file);
        csv.write_record(csv_header(pool))?;
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        let jsonl_path = dir.join(METRICS_JSONL);
        let mut jsonl = File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;
        let header = JsonlHeader {
            config_hash: config_hash.to_string(),
            columns: csv_header(pool),
        };
        writeln!(jsonl, "{}", serde_json::to_string(&header)?).map_err(|e| Error::io(&jsonl_path, e))?;
        Ok(MetricsWriter { csv, jsonl, jsonl_path })
    }

    /// Reopen existing files after dropping every record past `step`.
    pub fn resume(dir: &Path, config_hash: &str, step: usize) -> Result<Self> {
        let csv_path = dir.join(METRICS_CSV);
        let jsonl_path = dir.join(METRICS_JSONL);
        truncate_after(&csv_path, config_hash, step, |line| {
            line.split(',').next().and_then(|s| s.parse().ok())
        })?;
        truncate_after(&jsonl_path, config_hash, step, |line| {
            serde_json::from_str::<MetricsRecord>(line).ok().map(|r| r.step)
        })?;
        let open = |p: &Path| OpenOptions::new().append(true).open(p).map_err(|e| Error::io(p, e));
        Ok(MetricsWriter {
            csv: csv::WriterBuilder::new().has_headers(false).from_writer(open(&csv_path)?),
            jsonl: open(&jsonl_path)?,
            jsonl_path,
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        self.csv.write_record(rec.csv_fields())?;
        self.csv.flush().map_err(|e| Error::io(&self.jsonl_path, e))?;
        writeln!(self.jsonl, "{}", serde_json::to_string(rec)?).map_err(|e| Error::io(&self.jsonl_path, e))?;
        Ok(())
    }
}

/// Keep the header lines and every record whose step is `<= step`.
fn truncate_after(path: &Path, config_hash: &str, step: usize, step_of: impl Fn(&str) -> Option<usize>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let first = lines.first().map(String::as_str).unwrap_or("");
    if !first.contains(config_hash) {
        return Err(Error::Config(format!(
            "{} was written by a different config (expected hash {config_hash})",
            path.display()
        )));
    }
    let mut kept = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let header = i == 0 || (i == 1 && path.extension().is_some_and(|e| e == "csv"));
        if header || step_of(line).is_some_and(|s| s <= step) {
            kept.push(line.as_str());
        }
    }
    let mut text = kept.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read the config hash from the first line of a metrics file.
pub fn read_config_hash(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if let Some(h) = first.trim().strip_prefix("# config_hash=") {
        return Ok(h.to_string());
    }
    let header: JsonlHeader = serde_json::from_str(first.trim())
        .map_err(|_| Error::Data(format!("{} has no config hash header", path.display())))?;
    Ok(header.config_hash)
}

/// All records of a `metrics.jsonl` file.
pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
