//! Experiment orchestration: configuration, the two-phase protocol, logs and plots.

mod config;
mod log;
mod plot;
mod run;

use std::path::Path;

use sha2::{Digest, Sha256};

pub use config::{Agent, Collection, ExperimentConfig, Phase1Config};
pub use log::{read_log, LogRow, RunLog, LOG_HEADER};
pub use plot::{emit_plots, merge_runs, MergedSeries};
pub use run::{run_seed, run_seed_with, RunOptions, RunSummary};

use crate::error::Result;

/// Crate name and version recorded with every run.
pub fn code_version() -> String {
    format!("{}@{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Git blob hash (`sha256("blob <len>\0" ++ content)`) of a byte string.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the resolved config and the code version hash into `dir`.
pub fn write_provenance(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.kv"), config.to_kv()?)?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    let version = code_version();
    let provenance = serde_json::json!({
        "code_version": version,
        "code_hash": content_hash(version.as_bytes()),
    });
    std::fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&provenance)?)?;
    Ok(())
}

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS, which otherwise page-faults every large allocation afresh.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        ONCE.call_once(|| {
            // SAFETY: mallopt only adjusts glibc tunables; called before any worker threads exist.
            unsafe {
                libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
                libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
                libc::mallopt(libc::M_TOP_PAD, 64 << 20);
            }
        });
    }
}

#[cfg(test)]
mod tests;
