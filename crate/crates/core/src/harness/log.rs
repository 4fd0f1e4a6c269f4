//! Per-iteration CSV logs with a fixed schema shared by every method.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{input_err, Result};

pub const LOG_HEADER: &[&str] = &[
    "iteration",
    "phase",
    "steps",
    "batch_steps",
    "mean_ext_return",
    "episodes",
    "mean_int_raw",
    "mean_int",
    "collisions_per_1k",
    "cluster_count",
    "predictor_loss",
    "predictor_accuracy",
    "policy_loss",
    "v_ext_loss",
    "v_int_loss",
    "entropy",
    "clip_frac",
    "approx_kl",
];

/// One iteration. `None` cells are written empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub phase: u8,
    /// Environment interactions after this iteration.
    pub steps: u64,
    pub batch_steps: usize,
    /// Mean return of the episodes that ended during the iteration.
    pub mean_ext_return: Option<f64>,
    pub episodes: usize,
    pub mean_int_raw: f64,
    pub mean_int: f64,
    pub collisions_per_1k: f64,
    pub cluster_count: Option<usize>,
    pub predictor_loss: Option<f64>,
    pub predictor_accuracy: Option<f64>,
    pub policy_loss: Option<f64>,
    pub v_ext_loss: Option<f64>,
    pub v_int_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub clip_frac: Option<f64>,
    pub approx_kl: Option<f64>,
}

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LogRow {
    /// Shortest round-trip float formatting, so equal runs give equal bytes.
    pub fn to_csv(&self) -> String {
        let cells = [
            self.iteration.to_string(),
            self.phase.to_string(),
            self.steps.to_string(),
            self.batch_steps.to_string(),
            cell(self.mean_ext_return),
            self.episodes.to_string(),
            self.mean_int_raw.to_string(),
            self.mean_int.to_string(),
            self.collisions_per_1k.to_string(),
            cell(self.cluster_count),
            cell(self.predictor_loss),
            cell(self.predictor_accuracy),
            cell(self.policy_loss),
            cell(self.v_ext_loss),
            cell(self.v_int_loss),
            cell(self.entropy),
            cell(self.clip_frac),
            cell(self.approx_kl),
        ];
        let mut line = cells.join(",");
        line.push('\n');
        line
    }
}

/// Append-only CSV writer; the header is written on creation.
pub struct RunLog {
    out: BufWriter<File>,
    timing: BufWriter<File>,
}

impl RunLog {
    /// Creates `log.csv` and `timing.csv` (wall time, kept apart so logs stay reproducible).
    pub fn create(dir: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(dir.join("log.csv"))?);
        writeln!(out, "{}", LOG_HEADER.join(","))?;
        let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
        writeln!(timing, "iteration,wall_seconds")?;
        Ok(Self { out, timing })
    }

    pub fn append(&mut self, row: &LogRow, wall_seconds: f64) -> Result<()> {
        self.out.write_all(row.to_csv().as_bytes())?;
        let mut t = String::new();
        let _ = writeln!(t, "{},{:.3}", row.iteration, wall_seconds);
        self.timing.write_all(t.as_bytes())?;
        self.out.flush()?;
        self.timing.flush()?;
        Ok(())
    }
}

/// Reads a log back as a header and rows of optional numbers.
pub fn read_log(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| input_err(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<Option<f64>> = line
            .split(',')
            .map(|c| if c.is_empty() { None } else { c.parse().ok() })
            .collect();
        if row.len() != header.len() {
            return Err(input_err(format!("{} row {}: expected {} cells", path.display(), n + 1, header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
