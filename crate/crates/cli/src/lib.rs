//! Command-line harness: runs experiments described by JSON configs,
//! persists every run, and aggregates results into tables and SVG plots.
//!
//! ```text
//! quadopt run --config bench.json --seed 7 --out-dir out/bench --jobs 4
//! quadopt ablate nmax --config bench.json
//! quadopt select-exp --selection.repeats=20
//! quadopt plot out/bench
//! quadopt resume out/bench
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{Ablation, AblationOutput, Options};
use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "QUADOPT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "quadopt-out";

#[derive(Parser, Debug)]
#[command(
    name = "quadopt",
    version,
    about = "Budget-constrained binary layout optimization experiments",
    after_help = "Any other --key.path=value argument overrides the config file, e.g. --run.budget=500 or --jobs.0.method=rs."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (repeat r uses seed + r).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [env: QUADOPT_OUT_DIR].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Runs executed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Replace existing results instead of reusing them.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every job of the config for every repeat and summarize.
    Run,
    /// Module ablations: leaf-cap sweep, or the loop without QSS or CSS.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
    },
    /// Rounds-to-optimum comparison of selection strategies.
    SelectExp,
    /// Redraw summary and convergence plot of an experiment directory.
    Plot { dir: Option<PathBuf> },
    /// Continue interrupted runs in a run or experiment directory.
    Resume { dir: Option<PathBuf> },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationKind {
    Nmax,
    Qss,
    Css,
}

const FLAGS: [&str; 5] = ["config", "seed", "out-dir", "jobs", "force"];

/// Separates `--key.path=value` overrides from ordinary arguments.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for (i, arg) in args.into_iter().enumerate() {
        if i > 0 {
            if let Some((key, value)) = arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
                if !FLAGS.contains(&key) && !key.is_empty() {
                    overrides.push((key.to_string(), value.to_string()));
                    continue;
                }
            }
        }
        rest.push(arg);
    }
    (rest, overrides)
}

fn out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = config {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT_DIR),
    }
}

fn print_file(path: &Path) -> Result<()> {
    print!("{}", fs::read_to_string(path)?);
    Ok(())
}

fn execute(cli: Cli, mut overrides: Vec<(String, String)>) -> Result<()> {
    let common = cli.common;
    if common.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let opts = Options {
        threads: common.jobs,
        force: common.force,
    };
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let load = || config::load(common.config.as_deref(), &overrides);
    match cli.command {
        Command::Run => {
            let exp = load()?;
            let out = out_dir(common.out_dir.as_deref(), exp.out_dir.as_deref());
            commands::run_experiment(&exp, &out, opts)?;
            print_file(&out.join(report::SUMMARY_MD))?;
            println!("\nresults in {}", out.display());
        }
        Command::Ablate { kind } => {
            let exp = load()?;
            let out = out_dir(common.out_dir.as_deref(), exp.out_dir.as_deref());
            let kind = match kind {
                AblationKind::Nmax => Ablation::Nmax,
                AblationKind::Qss => Ablation::Qss,
                AblationKind::Css => Ablation::Css,
            };
            let (dir, result) = commands::ablate(kind, &exp, &out, opts)?;
            match result {
                AblationOutput::Nmax(rows) => print!("{}", commands::nmax_markdown(&exp.nmax.oracle, &rows)),
                AblationOutput::Runs(_) => print_file(&dir.join(report::SUMMARY_MD))?,
            }
            println!("\nresults in {}", dir.display());
        }
        Command::SelectExp => {
            let exp = load()?;
            let out = out_dir(common.out_dir.as_deref(), exp.out_dir.as_deref());
            let dir = commands::select_exp(&exp, &out, opts)?;
            print_file(&dir.join("summary.md"))?;
            println!("\nresults in {}", dir.display());
        }
        Command::Plot { dir } => {
            let dir = dir.unwrap_or_else(|| out_dir(common.out_dir.as_deref(), None));
            let svg = commands::plot(&dir)?;
            println!("wrote {}", svg.display());
        }
        Command::Resume { dir } => {
            let dir = dir.unwrap_or_else(|| out_dir(common.out_dir.as_deref(), None));
            let n = commands::resume(&dir, opts)?;
            println!("{n} run(s) complete in {}", dir.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let (rest, overrides) = split_overrides(args);
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
