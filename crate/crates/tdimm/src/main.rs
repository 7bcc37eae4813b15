use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdimm::commands;
use tdimm::config::Resolved;
use tdimm::report::{self, ReportRow};
use tdimm::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "tdimm", version, about = "Near-memory embedding pool simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML). Built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `benchmarks`. Repeatable.
    #[arg(long = "benchmark")]
    benchmarks: Vec<String>,
    /// Overrides `batch_sizes`. Repeatable.
    #[arg(long = "batch")]
    batches: Vec<u32>,
    /// Overrides `designs`. Repeatable.
    #[arg(long = "design")]
    designs: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every design point and write a CSV report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Report path; `-` or absent writes to stdout unless `output.csv` is set.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Like `run`, repeated over the configured link bandwidth scales.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Randomized functional-equivalence check.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: u64,
        /// Corrupt one node-side result per case (self-test of the harness).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Write per-rank DRAM request traces for the first benchmark and batch.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<(ExperimentConfig, Resolved), CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if !common.benchmarks.is_empty() {
        cfg.benchmarks = common.benchmarks.clone();
    }
    if !common.batches.is_empty() {
        cfg.batch_sizes = common.batches.clone();
    }
    if !common.designs.is_empty() {
        cfg.designs = common.designs.clone();
    }
    let resolved = cfg.resolve()?;
    Ok((cfg, resolved))
}

fn write_report(path: Option<&Path>, seed: u64, rows: &[ReportRow]) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            let f = File::create(p).map_err(|e| anyhow::anyhow!("creating {}: {e}", p.display()))?;
            report::write_csv(BufWriter::new(f), seed, rows)?;
        }
        _ => report::write_csv(io::stdout().lock(), seed, rows)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out } => {
            let (cfg, r) = resolve(&common)?;
            let rows = commands::cmd_run(&r)?;
            write_report(out.as_deref().or(cfg.output.csv.as_deref()), r.seed, &rows)
        }
        Command::Sweep { common, out } => {
            let (cfg, r) = resolve(&common)?;
            let rows = commands::cmd_sweep(&r)?;
            write_report(out.as_deref().or(cfg.output.csv.as_deref()), r.seed, &rows)
        }
        Command::Validate {
            seed,
            cases,
            inject_fault,
        } => {
            let s = commands::cmd_validate(seed, cases, inject_fault)?;
            println!("validate: {}/{} cases passed (seed={seed})", s.passed, s.cases);
            Ok(())
        }
        Command::Trace { common, out_dir } => {
            let (cfg, r) = resolve(&common)?;
            let dir = out_dir
                .or(cfg.output.trace_dir)
                .ok_or_else(|| CliError::Config("output.trace_dir: required for trace (or pass --out-dir)".into()))?;
            let out = commands::cmd_trace(&r, &r.benchmarks[0], r.batch_sizes[0], &dir)?;
            println!(
                "trace: {} requests across {} ranks in {}",
                out.requests,
                out.rank_files.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
