//! The work behind each subcommand. Every command writes into one output
//! directory and leaves it untouched on a rerun unless forced.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use quadopt_core::baselines::{
    analytic_random_rounds, nmax_tau_sweep, run_method, selection_efficiency_experiment, Method, NmaxRow, Strategy,
};
use quadopt_core::oracle::{oracle_by_id, Oracle};
use quadopt_core::persist::{self, read_manifest, read_run, run_to_dir, write_run, MANIFEST};
use quadopt_core::stats::{mean, median, std_dev};

use crate::config::{Experiment, Job};
use crate::error::{CliError, Result};
use crate::report::{self, RunRecord, SummaryRow, CONVERGENCE_SVG, RUNS, SUMMARY_CSV, SUMMARY_MD};

pub const EXPERIMENT_JSON: &str = "experiment.json";
pub const CONFIG_JSON: &str = "config.json";

/// Shared switches for every command.
#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub threads: usize,
    pub force: bool,
}

fn oracle(id: &str) -> Result<Arc<dyn Oracle>> {
    oracle_by_id(id).map_err(|e| CliError::Config(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    persist::write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("configs serialize");
    s.push('\n');
    s
}

/// Claims `dir` for a configuration. Returns `true` when the directory
/// already holds the same configuration and may be reused. A different
/// configuration is an error unless forced, in which case the old contents
/// are removed.
fn claim(dir: &Path, file: &str, config: &str, force: bool) -> Result<bool> {
    let path = dir.join(file);
    match fs::read_to_string(&path) {
        Ok(existing) if existing == config && !force => return Ok(true),
        Ok(_) if !force => {
            return Err(CliError::Config(format!(
                "{} holds a different configuration; pass --force to replace it",
                dir.display()
            )))
        }
        Ok(_) => fs::remove_dir_all(dir)?,
        Err(_) if force && dir.exists() => fs::remove_dir_all(dir)?,
        Err(_) => {}
    }
    fs::create_dir_all(dir)?;
    write_text(&path, config)?;
    Ok(false)
}

fn log(line: impl AsRef<str>) {
    eprintln!("{}", line.as_ref());
}

/// Runs one job repeat into `dir`, reusing or resuming what is there.
fn run_one(job: &Job, seed: u64, dir: &Path) -> Result<()> {
    let job = job.with_seed(seed);
    let config = job.manifest_config();
    let oracle = oracle(job.oracle())?;
    if dir.join(MANIFEST).exists() {
        let manifest = read_manifest(dir)?;
        if manifest.config != config || manifest.method != job.method.id() {
            return Err(CliError::Config(format!(
                "{} was produced by a different configuration; pass --force to rerun",
                dir.display()
            )));
        }
        if manifest.complete {
            log(format!("[{} seed={seed}] already complete", job.id));
            return Ok(());
        }
        if job.method.is_loop_variant() {
            log(format!("[{} seed={seed}] resuming", job.id));
            persist::resume(dir, oracle)?;
            return Ok(());
        }
    }
    let result = match job.method.loop_config(&job.run) {
        Some(run) => run_to_dir(&run, oracle.clone(), dir, None)?,
        None => {
            let r = run_method(job.method, &job.run, &job.baseline, oracle.clone())?;
            write_run(dir, oracle.as_ref(), config, &r)?;
            r
        }
    };
    let best = result.best().map_or(f64::NAN, |r| r.aggregate);
    log(format!("[{} seed={seed}] best={best} sims={}", job.id, result.used()));
    Ok(())
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes summary tables (and the convergence plot) for the runs under
/// `out`.
pub fn write_reports(out: &Path, order: Option<&[String]>, plots: bool) -> Result<Vec<SummaryRow>> {
    let records: Vec<RunRecord> = report::load_runs(out, order)?;
    let rows = report::summarize(&records);
    write_text(&out.join(SUMMARY_CSV), &report::summary_csv(&rows))?;
    write_text(&out.join(SUMMARY_MD), &report::summary_markdown(&rows))?;
    if plots {
        write_text(&out.join(CONVERGENCE_SVG), &report::convergence_svg(&records))?;
    }
    Ok(rows)
}

/// Every job for every repeat, then the summary.
pub fn run_experiment(exp: &Experiment, out: &Path, opts: Options) -> Result<Vec<SummaryRow>> {
    if exp.jobs.is_empty() {
        return Err(CliError::Config("jobs: at least one job is required".into()));
    }
    // a forced rerun starts from an empty directory
    claim(out, EXPERIMENT_JSON, &pretty(exp), opts.force)?;
    let tasks: Vec<(&Job, u64)> = exp.jobs.iter().flat_map(|j| exp.seeds().map(move |s| (j, s))).collect();
    pool(opts.threads)?.install(|| {
        tasks
            .par_iter()
            .map(|&(job, seed)| run_one(job, seed, &report::run_dir(out, &job.id, seed)))
            .collect::<Result<Vec<()>>>()
    })?;
    let order: Vec<String> = exp.jobs.iter().map(|j| j.id.clone()).collect();
    write_reports(out, Some(&order), exp.report.plots)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Nmax,
    Qss,
    Css,
}

impl Ablation {
    pub fn dir_name(self) -> &'static str {
        match self {
            Ablation::Nmax => "ablate-nmax",
            Ablation::Qss => "ablate-qss",
            Ablation::Css => "ablate-css",
        }
    }

    /// The full method followed by the variants with one module switched off.
    pub fn methods(self) -> &'static [Method] {
        match self {
            Ablation::Nmax => &[],
            Ablation::Qss => &[Method::Pqs, Method::PqsNoQss],
            Ablation::Css => &[Method::Pqs, Method::PqsTopKOnly, Method::PqsRandomOnly],
        }
    }
}

pub fn nmax_csv(rows: &[NmaxRow]) -> String {
    let refits = rows.iter().map(|r| r.taus.len()).max().unwrap_or(0);
    let mut out = String::from("cap,lambda,tau_mean,tau_std");
    for i in 0..refits {
        let _ = write!(out, ",tau_{i}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{}", r.cap, r.lambda, r.tau_mean, r.tau_std);
        for t in &r.taus {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
    }
    out
}

pub fn nmax_markdown(oracle: &str, rows: &[NmaxRow]) -> String {
    let mut out = format!("Test-set Kendall tau of the predictor on `{oracle}` designs grown to each leaf cap.\n\n");
    out.push_str("| N_max | lambda | tau (mean ± std) |\n|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(out, "| {} | {} | {:.4} ± {:.4} |", r.cap, r.lambda, r.tau_mean, r.tau_std);
    }
    let trend = rows.windows(2).all(|w| w[1].tau_mean <= w[0].tau_mean);
    let _ = writeln!(
        out,
        "\nTau is {}non-increasing in N_max.",
        if trend { "" } else { "not " }
    );
    out
}

pub enum AblationOutput {
    Nmax(Vec<NmaxRow>),
    Runs(Vec<SummaryRow>),
}

pub fn ablate(kind: Ablation, exp: &Experiment, out: &Path, opts: Options) -> Result<(PathBuf, AblationOutput)> {
    let dir = out.join(kind.dir_name());
    match kind {
        Ablation::Nmax => {
            let cfg = &exp.nmax;
            let csv_path = dir.join("nmax.csv");
            let reuse = claim(&dir, CONFIG_JSON, &pretty(cfg), opts.force)?;
            if reuse && csv_path.exists() {
                log(format!("{} is up to date", dir.display()));
                let rows = read_nmax_csv(&csv_path)?;
                return Ok((dir, AblationOutput::Nmax(rows)));
            }
            let rows = nmax_tau_sweep(cfg, oracle(&cfg.oracle)?)?;
            write_text(&dir.join("nmax.md"), &nmax_markdown(&cfg.oracle, &rows))?;
            write_text(&csv_path, &nmax_csv(&rows))?;
            Ok((dir, AblationOutput::Nmax(rows)))
        }
        Ablation::Qss | Ablation::Css => {
            let sub = exp.with_methods(kind.methods());
            let rows = run_experiment(&sub, &dir, opts)?;
            Ok((dir, AblationOutput::Runs(rows)))
        }
    }
}

fn read_nmax_csv(path: &Path) -> Result<Vec<NmaxRow>> {
    let text = fs::read_to_string(path)?;
    let bad = || CliError::Runtime(format!("{} is malformed", path.display()));
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() < 4 {
            return Err(bad());
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(NmaxRow {
            cap: vals[0].parse().map_err(|_| bad())?,
            lambda: f(vals[1])?,
            tau_mean: f(vals[2])?,
            tau_std: f(vals[3])?,
            taus: vals[4..].iter().map(|v| f(v)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

fn strategy_file(s: Strategy) -> String {
    format!("rounds-{s}.csv")
}

/// Rounds-to-optimum per strategy: one CSV per strategy, a summary table
/// and a box plot.
pub fn select_exp(exp: &Experiment, out: &Path, opts: Options) -> Result<PathBuf> {
    let cfg = &exp.selection;
    let dir = out.join("select-exp");
    let reuse = claim(&dir, CONFIG_JSON, &pretty(cfg), opts.force)?;
    let files: Vec<PathBuf> = cfg.strategies.iter().map(|&s| dir.join(strategy_file(s))).collect();
    if reuse && files.iter().all(|f| f.exists()) && dir.join(SUMMARY_CSV).exists() {
        log(format!("{} is up to date", dir.display()));
        return Ok(dir);
    }
    let table = selection_efficiency_experiment(cfg, oracle(&cfg.oracle)?)?;
    let analytic = analytic_random_rounds(table.masked, table.batch);
    let mut summary = String::from("strategy,repeats,median,mean,std,min,max,analytic_random\n");
    let mut md = format!(
        "Rounds until the masked optimum is simulated ({} masked designs, batch {}, {} repeats).\n\n\
         | strategy | median | mean ± std | min | max |\n|---|---:|---:|---:|---:|\n",
        table.masked, table.batch, cfg.repeats
    );
    let mut groups = Vec::new();
    for (k, s) in table.strategies.iter().enumerate() {
        let rounds: Vec<f64> = table.rounds[k].iter().map(|&r| r as f64).collect();
        let mut csv = String::from("repeat,rounds\n");
        for (i, r) in table.rounds[k].iter().enumerate() {
            let _ = writeln!(csv, "{i},{r}");
        }
        write_text(&files[k], &csv)?;
        let (md_, mn, sd) = (median(&rounds), mean(&rounds), std_dev(&rounds));
        let lo = rounds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let is_random = *s == Strategy::Random;
        let _ = writeln!(
            summary,
            "{s},{},{},{},{},{lo},{hi},{}",
            rounds.len(),
            md_.map(|v| v.to_string()).unwrap_or_default(),
            mn.map(|v| v.to_string()).unwrap_or_default(),
            sd.map(|v| v.to_string()).unwrap_or_default(),
            if is_random { analytic.to_string() } else { String::new() }
        );
        let _ = writeln!(
            md,
            "| {s} | {} | {:.2} ± {:.2} | {lo} | {hi} |",
            md_.unwrap_or(f64::NAN),
            mn.unwrap_or(f64::NAN),
            sd.unwrap_or(f64::NAN)
        );
        groups.push((s.to_string(), rounds));
    }
    let _ = writeln!(md, "\nUniform picking needs {analytic:.2} rounds on average.");
    write_text(&dir.join("summary.md"), &md)?;
    if exp.report.plots {
        let svg = report::box_svg("Rounds to reach the masked optimum", "rounds", &groups);
        write_text(&dir.join("rounds.svg"), &svg)?;
    }
    write_text(&dir.join(SUMMARY_CSV), &summary)?;
    Ok(dir)
}

/// Regenerates the convergence plot and summary for an experiment
/// directory.
pub fn plot(out: &Path) -> Result<PathBuf> {
    write_reports(out, None, true)?;
    Ok(out.join(CONVERGENCE_SVG))
}

/// Continues an interrupted run directory, or every run of an experiment
/// directory, then refreshes the experiment's reports.
pub fn resume(path: &Path, opts: Options) -> Result<usize> {
    if path.join(MANIFEST).exists() {
        resume_run(path)?;
        return Ok(1);
    }
    if !path.join(RUNS).is_dir() {
        return Err(CliError::Config(format!(
            "{} is neither a run directory nor an experiment directory",
            path.display()
        )));
    }
    let records_dirs: Vec<PathBuf> = fs::read_dir(path.join(RUNS))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .flat_map(|job| {
            fs::read_dir(job)
                .into_iter()
                .flatten()
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(MANIFEST).exists())
        })
        .collect();
    let mut dirs = records_dirs;
    dirs.sort();
    let count = dirs.len();
    pool(opts.threads)?.install(|| dirs.par_iter().map(|d| resume_run(d)).collect::<Result<Vec<()>>>())?;
    let plots = match fs::read_to_string(path.join(EXPERIMENT_JSON)) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v["report"]["plots"].as_bool())
            .unwrap_or(true),
        Err(_) => true,
    };
    write_reports(path, None, plots)?;
    Ok(count)
}

fn resume_run(dir: &Path) -> Result<()> {
    let manifest = read_manifest(dir)?;
    if manifest.complete {
        return Ok(());
    }
    if !manifest.method.parse::<Method>()?.is_loop_variant() {
        return Err(CliError::Runtime(format!(
            "{}: {} runs are written once finished and cannot be resumed",
            dir.display(),
            manifest.method
        )));
    }
    let result = persist::resume(dir, oracle(&manifest.oracle)?)?;
    log(format!("[{}] resumed to {} simulations", dir.display(), result.used()));
    // surface a torn or inconsistent directory as an error here
    read_run(dir)?;
    Ok(())
}
