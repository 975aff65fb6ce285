use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bilevel_contracts::bench::{self, BenchConfig};
use bilevel_contracts::validation::{run_suite, CriterionReport, SuiteOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "contract-bench", version, about = "Bilevel contract solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Initialization and training-payload seed (overrides `run.init_seed`
    /// and `solver.train_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for CSV output and the oracle cache.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Trace cadence in outer steps (overrides `solver.log_every`).
    #[arg(long, global = true)]
    log_every: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration; writes trace.csv and summary.csv.
    Run { config: PathBuf },
    /// Solve once per value of the `[sweep]` section; writes sweep.csv.
    Sweep { sweepfile: PathBuf },
    /// Grid-search reference for a configuration; writes oracle.csv.
    Oracle { config: PathBuf },
    /// Run the acceptance suite and print a table of checks.
    Validate,
}

fn load(cli: &Cli, path: &Path) -> Result<BenchConfig> {
    let mut cfg = BenchConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(every) = cli.log_every {
        cfg.solver.log_every = every;
        cfg.solver.validate()?;
    }
    Ok(cfg)
}

fn print_progress(report: &CriterionReport) {
    print!("{report}");
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(&cli, config)?;
            let report = bench::run(&cfg, &cli.out_dir)?;
            println!("{}", bench::TRACE_HEADER);
            println!("{}", bench::format_row(&report.outcome.summary));
        }
        Command::Sweep { sweepfile } => {
            let cfg = load(&cli, sweepfile)?;
            let reports = bench::sweep(&cfg, &cli.out_dir)?;
            println!("{} runs written to {}", reports.len(), cli.out_dir.join("sweep.csv").display());
        }
        Command::Oracle { config } => {
            let cfg = load(&cli, config)?;
            let truth = bench::oracle(&cfg, &cli.out_dir)?;
            println!(
                "t* = {:?}, a* = {:?}, u1* = {}, u2* = {}",
                truth.t_star, truth.a_star, truth.u1_star, truth.u2_star
            );
        }
        Command::Validate => {
            std::fs::create_dir_all(&cli.out_dir)?;
            let options = SuiteOptions {
                cache: Some(cli.out_dir.join("oracle_cache.tsv")),
                progress: Some(print_progress),
                ..SuiteOptions::default()
            };
            let report = run_suite(&options);
            let failed = report.criteria.iter().filter(|c| !c.passed()).count();
            println!("{} criteria, {failed} failed", report.criteria.len());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
