//! `artrec`: synthetic artwork-selection experiments from the command line.
//!
//! Exit codes: 0 success, 1 validation error, 2 backend failure.

mod artifact;
mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use artrec_core::backend::BackendError;
use artrec_core::corpus::{Preset, SplitLabel};
use clap::{Args, Parser, Subcommand};

use artifact::Run;
use backends::BackendSpec;
use commands::{Ctx, ExportKind, ObjectiveArg};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "artrec", version, about = "Personalized artwork selection experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// desk-scale or paper-scale.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Parent of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Accept prediction logs with more than 1% failed rows.
    #[arg(long, global = true)]
    allow_partial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the corpus, its splits and the oracle sidecar.
    Synth,
    /// Write training records for one split.
    Export {
        #[arg(long, value_enum)]
        kind: ExportKind,
        #[arg(long, default_value = "train")]
        split: SplitLabel,
    },
    /// Collect teacher justifications and keep those that replay to the truth.
    Distill {
        #[arg(long, default_value = "mock-oracle")]
        backend: BackendSpec,
        #[arg(long, default_value = "train")]
        split: SplitLabel,
    },
    /// Run a backend over a split and log its predictions.
    Infer {
        #[arg(long)]
        backend: BackendSpec,
        #[arg(long, default_value = "test")]
        split: SplitLabel,
    },
    /// Grid-search the option policy; DPO starts from checkpoints/sft.json by default.
    Train {
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Score a prediction log, optionally against a baseline log.
    Eval {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Combine eval reports into one comparison table.
    Report {
        #[arg(required = true)]
        evals: Vec<PathBuf>,
        /// Label of the row the others are compared against; defaults to the first.
        #[arg(long)]
        baseline: Option<String>,
    },
}

/// A backend problem detected after the fact, such as too many failed rows.
#[derive(Debug)]
pub struct BackendFailure(pub String);

impl std::fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BackendFailure {}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let overrides = Overrides {
        seed: g.seed,
        preset: g.preset,
        allow_partial: g.allow_partial,
    };
    let config = RunConfig::resolve(g.config.as_deref(), &overrides)?;
    let hash = config.hash();
    println!("config hash: {hash}");
    let parallelism = g
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if parallelism == 0 {
        anyhow::bail!("--parallelism must be at least 1");
    }
    let ctx = Ctx {
        run: Run::new(&g.out, hash),
        config,
        parallelism,
    };
    println!("run dir: {}", ctx.run.dir.display());
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Export { kind, split } => commands::export(&ctx, kind, split),
        Command::Distill { backend, split } => commands::distill(&ctx, &backend, split),
        Command::Infer { backend, split } => commands::infer(&ctx, &backend, split),
        Command::Train { objective, init } => commands::train_cmd(&ctx, objective, init.as_deref()),
        Command::Eval { log, baseline, label } => {
            commands::eval(&ctx, &log, baseline.as_deref(), label.as_deref())
        }
        Command::Report { evals, baseline } => commands::report(&ctx, &evals, baseline.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let backend = e
                .chain()
                .any(|c| c.is::<BackendError>() || c.is::<BackendFailure>());
            ExitCode::from(if backend { 2 } else { 1 })
        }
    }
}
