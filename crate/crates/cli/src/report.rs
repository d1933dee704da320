//! Summary tables and plots built from persisted run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadopt_core::persist::read_run;
use quadopt_core::stats::{mean, median, std_dev};

use crate::error::{CliError, Result};
use crate::svg::{self, Doc, Scale};

pub const RUNS: &str = "runs";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";
pub const CONVERGENCE_SVG: &str = "convergence.svg";

/// What the summary needs from one finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub job: String,
    pub method: String,
    pub oracle: String,
    pub seed: u64,
    pub budget: usize,
    pub best: f64,
    /// Criteria of the best design.
    pub objectives: Vec<f64>,
    pub sims: usize,
    pub best_so_far: Vec<f64>,
    /// Relative to the experiment directory.
    pub dir: PathBuf,
}

pub fn run_dir(out: &Path, job: &str, seed: u64) -> PathBuf {
    out.join(RUNS).join(job).join(format!("seed-{seed}"))
}

pub fn load_run(out: &Path, dir: &Path, job: &str) -> Result<RunRecord> {
    let (manifest, result) =
        read_run(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let best = result
        .best()
        .ok_or_else(|| CliError::Runtime(format!("{}: run has no evaluations", dir.display())))?;
    Ok(RunRecord {
        job: job.to_string(),
        method: manifest.method.clone(),
        oracle: manifest.oracle.clone(),
        seed: manifest.seed,
        budget: manifest.budget,
        best: best.aggregate,
        objectives: best.criteria.values().to_vec(),
        sims: result.used(),
        best_so_far: result.best_so_far(),
        dir: dir.strip_prefix(out).unwrap_or(dir).to_path_buf(),
    })
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn seed_of(dir: &Path) -> Option<u64> {
    dir.file_name()?.to_str()?.strip_prefix("seed-")?.parse().ok()
}

/// Every run under `out/runs`, grouped by job. Jobs follow `order` when
/// given (unknown jobs last, by name); seeds ascend.
pub fn load_runs(out: &Path, order: Option<&[String]>) -> Result<Vec<RunRecord>> {
    let root = out.join(RUNS);
    if !root.is_dir() {
        return Err(CliError::Runtime(format!("{} has no {RUNS} directory", out.display())));
    }
    let mut jobs: Vec<(usize, String, PathBuf)> = Vec::new();
    for dir in sorted_subdirs(&root)? {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let rank = order
            .and_then(|o| o.iter().position(|j| *j == name))
            .unwrap_or(usize::MAX);
        jobs.push((rank, name, dir));
    }
    jobs.sort();
    let mut records = Vec::new();
    for (_, job, dir) in jobs {
        let mut seeds: Vec<(u64, PathBuf)> = sorted_subdirs(&dir)?
            .into_iter()
            .filter_map(|d| seed_of(&d).map(|s| (s, d)))
            .collect();
        seeds.sort();
        for (_, d) in seeds {
            records.push(load_run(out, &d, &job)?);
        }
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single run.
    pub std: Option<f64>,
}

impl Stat {
    fn of(xs: &[f64]) -> Option<Stat> {
        Some(Stat {
            median: median(xs)?,
            mean: mean(xs)?,
            std: if xs.len() > 1 { std_dev(xs) } else { None },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub job: String,
    pub method: String,
    pub oracle: String,
    pub runs: usize,
    pub agg: Stat,
    pub obj1: Option<Stat>,
    pub obj2: Option<Stat>,
    pub sims: Stat,
    pub runs_dir: PathBuf,
}

/// One row per job, in the order jobs first appear.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut jobs: Vec<&str> = Vec::new();
    for r in records {
        if !jobs.contains(&r.job.as_str()) {
            jobs.push(&r.job);
        }
    }
    jobs.into_iter()
        .map(|job| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.job == job).collect();
            let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<Stat> {
                let xs: Option<Vec<f64>> = rs.iter().map(|r| f(r)).collect();
                Stat::of(&xs?)
            };
            SummaryRow {
                job: job.to_string(),
                method: rs[0].method.clone(),
                oracle: rs[0].oracle.clone(),
                runs: rs.len(),
                agg: col(&|r| Some(r.best)).expect("at least one run"),
                obj1: col(&|r| r.objectives.first().copied()),
                obj2: col(&|r| r.objectives.get(1).copied()),
                sims: col(&|r| Some(r.sims as f64)).expect("at least one run"),
                runs_dir: Path::new(RUNS).join(job),
            }
        })
        .collect()
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "job,method,oracle,runs,agg_median,agg_mean,agg_std,obj1_median,obj1_mean,obj1_std,\
         obj2_median,obj2_mean,obj2_std,sims_median,sims_mean,sims_std,runs_dir\n",
    );
    for r in rows {
        let stat = |s: Option<Stat>| {
            format!(
                "{},{},{}",
                num(s.map(|s| s.median)),
                num(s.map(|s| s.mean)),
                num(s.and_then(|s| s.std))
            )
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.job,
            r.method,
            r.oracle,
            r.runs,
            stat(Some(r.agg)),
            stat(r.obj1),
            stat(r.obj2),
            stat(Some(r.sims)),
            r.runs_dir.display()
        );
    }
    out
}

fn cell(s: Option<Stat>, digits: usize) -> String {
    match s {
        None => "n/a".into(),
        Some(s) => match s.std {
            Some(sd) => format!("{:.d$} ({:.d$} ± {:.d$})", s.median, s.mean, sd, d = digits),
            None => format!("{:.d$}", s.median, d = digits),
        },
    }
}

pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut out = String::from("Median (mean ± std) over runs of the best design found.\n\n");
    out.push_str("| job | method | runs | Agg | Obj1 | Obj2 | simulations |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.job,
            r.method,
            r.runs,
            cell(Some(r.agg), 4),
            cell(r.obj1, 4),
            cell(r.obj2, 4),
            cell(Some(r.sims), 1)
        );
    }
    out
}

/// Median best-so-far over runs, one value per simulation count. Runs that
/// stopped early hold their last value.
pub fn median_curve(runs: &[&RunRecord]) -> Vec<f64> {
    let len = runs.iter().map(|r| r.best_so_far.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let xs: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.best_so_far.get(k).or(r.best_so_far.last()).copied())
                .collect();
            median(&xs).expect("non-empty")
        })
        .collect()
}

/// Best-so-far aggregate against simulations used, one polyline per job.
/// The x axis spans 0..=T_max.
pub fn convergence_svg(records: &[RunRecord]) -> String {
    let rows = summarize(records);
    let budget = records.iter().map(|r| r.budget).max().unwrap_or(1);
    let curves: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|row| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.job == row.job).collect();
            (row.job.clone(), median_curve(&runs))
        })
        .collect();
    let finite = curves.iter().flat_map(|c| c.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };

    let x = Scale::new(0.0, budget as f64, svg::MARGIN_LEFT, svg::WIDTH - svg::MARGIN_RIGHT);
    let y = Scale::new(lo, hi, svg::HEIGHT - svg::MARGIN_BOTTOM, svg::MARGIN_TOP);
    let mut doc = Doc::new("Best aggregate vs simulations (median over runs)");
    doc.axes(&x, &y, "simulations", "best aggregate so far");
    for (k, (job, curve)) in curves.iter().enumerate() {
        let mut data = format!("data job={job}\nsimulations,best\n");
        let mut points = String::new();
        for (i, v) in curve.iter().enumerate() {
            let _ = writeln!(data, "{},{}", i + 1, v);
            let _ = write!(points, "{:.2},{:.2} ", x.map((i + 1) as f64), y.map(*v));
        }
        doc.comment(&data);
        doc.raw(&format!(
            r#"<polyline class="series" data-job="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            svg::escape(job),
            svg::color(k),
            points.trim_end()
        ));
        doc.legend(k, job, svg::color(k));
    }
    doc.finish()
}

/// Five-number summary per group: min, lower quartile, median, upper
/// quartile, max (quartiles by linear interpolation).
pub fn five_numbers(xs: &[f64]) -> Option<[f64; 5]> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        if i + 1 < v.len() {
            v[i] + frac * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

/// Box plot of several named distributions.
pub fn box_svg(title: &str, y_title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let all = groups.iter().flat_map(|g| g.1.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    let n = groups.len().max(1) as f64;
    let x = Scale::new(0.0, n, svg::MARGIN_LEFT, svg::WIDTH - svg::MARGIN_RIGHT);
    let y = Scale::new(lo, hi, svg::HEIGHT - svg::MARGIN_BOTTOM, svg::MARGIN_TOP);
    let mut doc = Doc::new(title);
    doc.axes(&x, &y, "", y_title);
    for (k, (name, values)) in groups.iter().enumerate() {
        let mut data = format!("data group={name}\nvalue\n");
        for v in values {
            let _ = writeln!(data, "{v}");
        }
        doc.comment(&data);
        let cx = x.map(k as f64 + 0.5);
        let half = (x.map(1.0) - x.map(0.0)) * 0.25;
        let stroke = svg::color(k);
        if let Some([mn, q1, md, q3, mx]) = five_numbers(values) {
            doc.line(cx, y.map(mn), cx, y.map(q1), stroke);
            doc.line(cx, y.map(q3), cx, y.map(mx), stroke);
            doc.line(cx - half / 2.0, y.map(mn), cx + half / 2.0, y.map(mn), stroke);
            doc.line(cx - half / 2.0, y.map(mx), cx + half / 2.0, y.map(mx), stroke);
            doc.raw(&format!(
                r#"<rect class="box" data-group="{}" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{stroke}"/>"#,
                svg::escape(name),
                cx - half,
                y.map(q3),
                2.0 * half,
                (y.map(q1) - y.map(q3)).max(0.5)
            ));
            doc.line(cx - half, y.map(md), cx + half, y.map(md), stroke);
        }
        doc.text(cx, svg::HEIGHT - svg::MARGIN_BOTTOM + 32.0, "middle", "group", name);
    }
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::check_svg;

    fn record(job: &str, seed: u64, best_so_far: Vec<f64>) -> RunRecord {
        RunRecord {
            job: job.into(),
            method: job.into(),
            oracle: "count-ones-4x4".into(),
            seed,
            budget: 10,
            best: *best_so_far.last().unwrap(),
            objectives: vec![*best_so_far.last().unwrap()],
            sims: best_so_far.len(),
            best_so_far,
            dir: PathBuf::from(format!("runs/{job}/seed-{seed}")),
        }
    }

    #[test]
    fn summary_rows_follow_job_order() {
        let recs = vec![
            record("b", 0, vec![1.0, 3.0]),
            record("b", 1, vec![2.0, 5.0]),
            record("a", 0, vec![4.0]),
        ];
        let rows = summarize(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].job, "b");
        assert_eq!(rows[0].agg.median, 4.0);
        assert_eq!(rows[0].agg.std, Some(2f64.sqrt()));
        assert!(rows[0].obj2.is_none());
        assert_eq!(rows[1].agg.std, None);
        let csv = summary_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("a,a,count-ones-4x4,1,4,4,,4,4,,,,,1,1,,runs"));
        assert!(summary_markdown(&rows).contains("| b | b | 2 |"));
    }

    #[test]
    fn median_curve_holds_last_value() {
        let a = record("x", 0, vec![1.0, 2.0, 3.0]);
        let b = record("x", 1, vec![5.0]);
        assert_eq!(median_curve(&[&a, &b]), vec![3.0, 3.5, 4.0]);
    }

    #[test]
    fn plots_are_well_formed() {
        let recs = vec![record("p<q", 0, vec![1.0, 2.0]), record("r", 0, vec![-1.0, 0.5, 0.5])];
        let svg = convergence_svg(&recs);
        check_svg(&svg).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"class="x-max" x="560.0" y="406.0" text-anchor="middle">10<"#));
        let svg = box_svg("t", "rounds", &[("css".into(), vec![1.0, 2.0, 9.0]), ("none".into(), vec![])]);
        check_svg(&svg).unwrap();
        assert_eq!(svg.matches(r#"class="box""#).count(), 1);
    }

    #[test]
    fn five_numbers_interpolate() {
        assert_eq!(five_numbers(&[4.0, 1.0, 3.0, 2.0, 5.0]), Some([1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(five_numbers(&[1.0, 2.0]), Some([1.0, 1.25, 1.5, 1.75, 2.0]));
        assert_eq!(five_numbers(&[]), None);
    }
}
