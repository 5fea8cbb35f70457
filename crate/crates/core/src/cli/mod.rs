//! Command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_evaluate, cmd_evolve, cmd_generate_responses, cmd_loop, ledger_path, EvalArgs,
};
pub use config::{DataPaths, Presets, RunConfig, SandboxConfig, SeedFormat};

use crate::backend::BackendError;
use crate::bench::{BenchError, Benchmark, PromptStyle, TaskMode};
use crate::corpus::CorpusError;
use crate::evolve::{EvolveError, RunLedger};
use crate::metrics::{self, MetricsError, Report};

/// The execution environment could not be prepared.
#[derive(Debug, thiserror::Error)]
#[error("sandbox setup: {0}")]
pub struct SandboxSetupError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_SANDBOX: i32 = 4;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<SandboxSetupError>() {
            return EXIT_SANDBOX;
        }
        if cause.is::<BackendError>() {
            return EXIT_BACKEND;
        }
        if let Some(e) = cause.downcast_ref::<EvolveError>() {
            match e {
                EvolveError::Backend { .. } => return EXIT_BACKEND,
                EvolveError::ResponsesInterrupted { source, .. } => {
                    if matches!(**source, EvolveError::Backend { .. }) {
                        return EXIT_BACKEND;
                    }
                    return EXIT_DATA;
                }
                _ => return EXIT_DATA,
            }
        }
        if cause.is::<BenchError>() || cause.is::<CorpusError>() || cause.is::<MetricsError>() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}

#[derive(Debug, Parser)]
#[command(
    name = "evolcode",
    version,
    about = "Instruction evolution and code-generation evaluation"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel sandbox executions.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Python interpreter for candidate programs.
    #[arg(long, global = true)]
    pub interpreter: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Plotdata,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Evolve the seed corpus for a number of rounds.
    Evolve {
        #[arg(long, default_value_t = 1)]
        rounds: u32,
    },
    /// Fill empty responses of a corpus with the configured backend.
    GenerateResponses {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate, execute and score one benchmark.
    Evaluate {
        #[arg(long)]
        benchmark: Benchmark,
        /// Backend spec file of the model under test.
        #[arg(long)]
        endpoint: PathBuf,
        #[arg(long, default_value = "greedy")]
        preset: String,
        #[arg(long, default_value = "completion")]
        mode: TaskMode,
        #[arg(long)]
        style: Option<PromptStyle>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Alternate evolution, external fine-tuning and HumanEval evaluation until pass@1 declines.
    Loop {
        #[arg(long, default_value_t = 4)]
        max_rounds: u32,
        /// Shell command run as `<cmd> <round> <corpus>`; prints the round's endpoint spec.
        #[arg(long)]
        register_cmd: Option<String>,
    },
    /// Render reports (markdown or CSV) or a run ledger (plotdata).
    Report {
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
        /// Report JSON files, or a ledger for plotdata.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rank measured reports against published baselines.
    Compare {
        /// `model,score` CSV of reported scores (percent).
        #[arg(long)]
        baselines: Option<PathBuf>,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

impl Cli {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(i) = &self.interpreter {
            cfg.interpreter = i.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_reports(paths: &[PathBuf]) -> Result<Vec<Report>> {
    paths
        .iter()
        .map(|p| Report::load(p).with_context(|| format!("reading report {}", p.display())))
        .collect()
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.config()?;
    match cli.command {
        Cmd::Evolve { rounds } => {
            let ledger = cmd_evolve(&cfg, rounds)?;
            println!(
                "ledger: {} ({} entries)",
                ledger_path(&cfg).display(),
                ledger.rounds.len()
            );
        }
        Cmd::GenerateResponses { input, output } => {
            let corpus = cmd_generate_responses(&cfg, &input, &output)?;
            println!("{} records written to {}", corpus.len(), output.display());
        }
        Cmd::Evaluate {
            benchmark,
            endpoint,
            preset,
            mode,
            style,
            limit,
            data,
        } => {
            let report = cmd_evaluate(
                &cfg,
                &EvalArgs {
                    benchmark,
                    endpoint,
                    preset,
                    mode,
                    style,
                    limit,
                    data,
                    out: None,
                },
            )?;
            print!(
                "{}",
                metrics::render_markdown(std::slice::from_ref(&report))?
            );
        }
        Cmd::Loop {
            max_rounds,
            register_cmd,
        } => {
            if register_cmd.is_some() {
                cfg.register_cmd = register_cmd;
            }
            cmd_loop(&cfg, max_rounds)?;
        }
        Cmd::Report { format, inputs } => match format {
            ReportFormat::Plotdata => {
                for p in &inputs {
                    let ledger = RunLedger::load(p)?;
                    print!("{}", metrics::render_plotdata(&ledger)?);
                }
            }
            ReportFormat::Markdown => {
                print!("{}", metrics::render_markdown(&load_reports(&inputs)?)?)
            }
            ReportFormat::Csv => print!("{}", metrics::render_csv(&load_reports(&inputs)?)),
        },
        Cmd::Compare { baselines, reports } => {
            let baselines = match baselines {
                Some(p) => metrics::parse_baselines(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => Vec::new(),
            };
            print!(
                "{}",
                metrics::compare(&load_reports(&reports)?, &baselines)?
            );
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
