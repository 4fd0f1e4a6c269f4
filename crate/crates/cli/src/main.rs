//! `aep` command line: train one experiment or plot finished runs.

use std::path::PathBuf;

use aep_core::harness::{emit_plots, run_seed_with, ExperimentConfig, RunOptions};
use aep_core::intrinsic::Method;
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aep", version, about = "Auditory event prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on the configured environment, one directory per seed.
    Train {
        /// Key-value config file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's method.
        #[arg(long)]
        method: Option<Method>,
        /// Runs only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; seeds go to `<out>/seed_<n>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes every sounding clip as a WAV file under this directory.
        #[arg(long)]
        dump_audio: Option<PathBuf>,
        /// Extra `key=value` overrides applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Mean ± std curves over seeds, one curve per run directory.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            method,
            seed,
            out,
            dump_audio,
            overrides,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => ExperimentConfig::default(),
            };
            for o in &overrides {
                let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            for &s in &cfg.seeds {
                let dir = cfg.out_dir.join(format!("seed_{s}"));
                let options = RunOptions {
                    dump_audio: dump_audio.as_ref().map(|d| d.join(format!("seed_{s}"))),
                };
                log::info!("{} on {} seed {s} -> {}", cfg.method, cfg.env, dir.display());
                let summary = run_seed_with(&cfg, s, &dir, &options)?;
                println!("{}", serde_json::to_string(&summary)?);
            }
        }
        Command::Plot { runs, out } => {
            for path in emit_plots(&runs, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
