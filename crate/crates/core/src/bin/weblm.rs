use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weblm::pipeline::{
    compute_stats, format_record, generate_corpus, gradcheck_from_config, prep, train_toy, CorpusSpec, PipelineConfig,
    ShardSet, TrainOptions,
};
use weblm::{Error, Result};

#[derive(Parser)]
#[command(name = "weblm", version, about = "Webpage language model data and training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of page bundles.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn page bundles into verified record shards.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print corpus statistics for a shard directory.
    Stats {
        shards: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train the encoder on a shard directory.
    Train {
        #[arg(long)]
        shards: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss log (JSON lines).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Dump one record.
    Inspect {
        shards: PathBuf,
        #[arg(long)]
        record: u64,
    },
    /// Compare analytic and numerical gradients on a generated page.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Like `println!`, but a closed stdout is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path)?.with_env_seed()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { spec, out } => {
            let mut spec = CorpusSpec::load(&spec)?;
            if let Some(seed) = weblm::pipeline::env_seed()? {
                spec.seed = seed;
            }
            let dirs = generate_corpus(&spec, &out)?;
            out!("wrote {} pages to {}", dirs.len(), out.display());
        }
        Command::Prep { input, out, config } => {
            let summary = prep(&input, &out, &load_config(&config)?)?;
            for (id, why) in &summary.skipped {
                eprintln!("skipped {id}: {why}");
            }
            out!(
                "{} records from {} of {} pages in {}",
                summary.manifest.record_count,
                summary.pages_used,
                summary.pages_seen,
                out.display()
            );
        }
        Command::Stats { shards, json } => {
            let set = ShardSet::open(&shards)?;
            let report = compute_stats(&set.records, &set.tags);
            if json {
                out!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?
                );
            } else {
                out!("{}", report.to_text().trim_end());
            }
        }
        Command::Train {
            shards,
            config,
            steps,
            out,
            metrics,
            resume,
        } => {
            let set = ShardSet::open(&shards)?;
            let opts = TrainOptions {
                steps,
                checkpoint: out.clone(),
                metrics,
                resume,
            };
            let summary = train_toy(&set, &load_config(&config)?, &opts)?;
            if let (Some(first), Some(last)) = (summary.reports.first(), summary.reports.last()) {
                out!(
                    "steps {}..{} loss {:.4} -> {:.4}",
                    first.step,
                    last.step,
                    first.losses.total,
                    last.losses.total
                );
            }
            out!("checkpoint {}", out.display());
        }
        Command::Inspect { shards, record } => {
            let set = ShardSet::open(&shards)?;
            let rec = set
                .record(record)
                .ok_or_else(|| Error::Format(format!("no record {record} in {}", shards.display())))?;
            out!("{}", format_record(rec, &set).trim_end());
        }
        Command::Gradcheck { config } => {
            let report = gradcheck_from_config(&load_config(&config)?)?;
            out!(
                "checked {} entries in {} tensors, max relative error {:.3e} ({})",
                report.checked,
                report.tensors,
                report.max_rel_error,
                report.worst
            );
            if report.max_rel_error >= 1e-4 {
                return Err(Error::Numerics(format!(
                    "gradient mismatch {:.3e}",
                    report.max_rel_error
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
