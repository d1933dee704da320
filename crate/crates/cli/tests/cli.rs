use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

use quadopt_cli::svg::{check_svg, comments};
use quadopt_core::oracle::oracle_by_id;
use quadopt_core::persist::{read_run, run_to_dir};
use quadopt_core::pqs::RunConfig;

fn quadopt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadopt"))
        .args(args)
        .current_dir(cwd)
        .env_remove("QUADOPT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, methods: &[&str]) -> PathBuf {
    let jobs: Vec<_> = methods.iter().map(|m| json!({ "method": m })).collect();
    let config = json!({
        "repeats": 2,
        "run": {
            "oracle": "count-ones-4x4",
            "budget": 60,
            "initial": 20,
            "batch": 10,
            "search_steps": 500,
            "probe": 10,
            "pixel_pool": 200,
            "schedule": {"kind": "geometric", "initial": 8, "max": 16}
        },
        "baseline": {"pool": 200},
        "jobs": jobs,
        "nmax": {"caps": [8, 16], "train": 60, "validation": 20, "test": 20, "refits": 3},
        "selection": {"pool": 200, "batch": 20, "repeats": 4, "pool_cap": 16}
    });
    let path = dir.join("bench.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn text(out: &Output) -> String {
    format!(
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_twice_gives_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["pqs", "rs", "surrogate-rs"]);
    let args = ["run", "--config", config.to_str().unwrap(), "--seed", "7", "--out-dir", "out"];
    let first = quadopt(&args, tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", text(&first));
    let out = tmp.path().join("out");
    let files = ["summary.csv", "summary.md", "convergence.svg", "experiment.json"];
    let before: Vec<String> = files.iter().map(|f| read(&out.join(f))).collect();

    let second = quadopt(&args, tmp.path());
    assert_eq!(second.status.code(), Some(0), "{}", text(&second));
    assert!(String::from_utf8_lossy(&second.stderr).contains("already complete"));
    let after: Vec<String> = files.iter().map(|f| read(&out.join(f))).collect();
    assert_eq!(before, after);

    // one row per method, seeds 7 and 8
    let csv = &before[0];
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, m) in rows.iter().zip(["pqs", "rs", "surrogate-rs"]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], m);
        assert_eq!(cols[3], "2");
        let runs_dir = out.join(cols.last().unwrap());
        for seed in [7, 8] {
            let (manifest, result) = read_run(&runs_dir.join(format!("seed-{seed}"))).unwrap();
            assert_eq!(manifest.seed, seed);
            assert!(result.used() <= 60);
        }
    }
}

#[test]
fn convergence_plot_has_one_monotone_curve_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["pqs", "rs"]);
    let run = quadopt(&["run", "--config", config.to_str().unwrap(), "--out-dir", "out"], tmp.path());
    assert_eq!(run.status.code(), Some(0), "{}", text(&run));
    let out = tmp.path().join("out");
    fs::remove_file(out.join("convergence.svg")).unwrap();
    let plot = quadopt(&["plot", "out"], tmp.path());
    assert_eq!(plot.status.code(), Some(0), "{}", text(&plot));

    let svg = read(&out.join("convergence.svg"));
    check_svg(&svg).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    let x_max = svg
        .split(r#"class="x-max""#)
        .nth(1)
        .and_then(|s| s.split('>').nth(1))
        .and_then(|s| s.split('<').next())
        .unwrap();
    assert_eq!(x_max, "60");
    let data = comments(&svg);
    assert_eq!(data.len(), 2);
    for block in data {
        let values: Vec<f64> = block
            .lines()
            .filter_map(|l| l.split_once(',').and_then(|(_, v)| v.parse().ok()))
            .collect();
        assert!(!values.is_empty());
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn unknown_method_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["pqs", "cgan"]);
    let out = quadopt(&["run", "--config", config.to_str().unwrap(), "--out-dir", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("jobs[1].method") && err.contains("cgan"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn changed_config_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["rs"]);
    let c = config.to_str().unwrap();
    let first = quadopt(&["run", "--config", c, "--out-dir", "out"], tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", text(&first));
    let changed = quadopt(&["run", "--config", c, "--out-dir", "out", "--run.budget=70"], tmp.path());
    assert_eq!(changed.status.code(), Some(2), "{}", text(&changed));
    let forced = quadopt(&["run", "--config", c, "--out-dir", "out", "--run.budget=70", "--force"], tmp.path());
    assert_eq!(forced.status.code(), Some(0), "{}", text(&forced));
    let csv = read(&tmp.path().join("out/summary.csv"));
    let sims: f64 = csv.lines().nth(1).unwrap().split(',').nth(13).unwrap().parse().unwrap();
    assert!(sims > 60.0 && sims <= 70.0, "{csv}");
}

#[test]
fn out_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["rs"]);
    let out = Command::new(env!("CARGO_BIN_EXE_quadopt"))
        .args(["run", "--config", config.to_str().unwrap(), "--repeats=1"])
        .current_dir(tmp.path())
        .env("QUADOPT_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    assert!(tmp.path().join("from-env/summary.csv").exists());
}

#[test]
fn missing_runs_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("empty/runs")).unwrap();
    fs::create_dir_all(tmp.path().join("empty/runs/pqs/seed-0")).unwrap();
    let out = quadopt(&["plot", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    let out = quadopt(&["resume", "nowhere"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
}

#[test]
fn ablations_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &[]);
    let c = config.to_str().unwrap();

    let nmax = quadopt(&["ablate", "nmax", "--config", c, "--out-dir", "out"], tmp.path());
    assert_eq!(nmax.status.code(), Some(0), "{}", text(&nmax));
    let csv = read(&tmp.path().join("out/ablate-nmax/nmax.csv"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("cap,lambda,tau_mean,tau_std,tau_0,tau_1,tau_2\n8,"));
    // the default sweep has three caps
    let default = quadopt(
        &["ablate", "nmax", "--config", c, "--out-dir", "out2", "--nmax.caps=[16,32,64]"],
        tmp.path(),
    );
    assert_eq!(default.status.code(), Some(0), "{}", text(&default));
    assert_eq!(read(&tmp.path().join("out2/ablate-nmax/nmax.csv")).lines().count(), 4);

    let css = quadopt(&["ablate", "css", "--config", c, "--out-dir", "out", "--repeats=1"], tmp.path());
    assert_eq!(css.status.code(), Some(0), "{}", text(&css));
    let methods: Vec<String> = read(&tmp.path().join("out/ablate-css/summary.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(methods, ["pqs", "pqs-topk-only", "pqs-random-only"]);

    let qss = quadopt(&["ablate", "qss", "--config", c, "--out-dir", "out", "--repeats=1"], tmp.path());
    assert_eq!(qss.status.code(), Some(0), "{}", text(&qss));
    let summary = read(&tmp.path().join("out/ablate-qss/summary.csv"));
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.contains("\npqs-no-qss,pqs-no-qss,"));
    let (manifest, _) = read_run(&tmp.path().join("out/ablate-qss/runs/pqs-no-qss/seed-0")).unwrap();
    assert_eq!(manifest.config["sampler"], json!("pixel"));
}

#[test]
fn select_exp_writes_one_file_per_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &[]);
    let args = ["select-exp", "--config", config.to_str().unwrap(), "--out-dir", "out"];
    let out = quadopt(&args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let dir = tmp.path().join("out/select-exp");
    for s in ["css", "topk", "random"] {
        let csv = read(&dir.join(format!("rounds-{s}.csv")));
        assert_eq!(csv.lines().count(), 5, "{s}");
    }
    let svg = read(&dir.join("rounds.svg"));
    check_svg(&svg).unwrap();
    assert_eq!(svg.matches(r#"class="box""#).count(), 3);
    let before = read(&dir.join("summary.csv"));
    let again = quadopt(&args, tmp.path());
    assert!(String::from_utf8_lossy(&again.stderr).contains("up to date"));
    assert_eq!(read(&dir.join("summary.csv")), before);
}

#[test]
fn resume_completes_an_interrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        oracle: "count-ones-4x4".into(),
        budget: 60,
        initial: 20,
        search_steps: 500,
        probe: 10,
        seed: 3,
        ..RunConfig::default()
    };
    let oracle = oracle_by_id(&config.oracle).unwrap();
    let whole = tmp.path().join("whole");
    let cut = tmp.path().join("cut");
    run_to_dir(&config, oracle.clone(), &whole, None).unwrap();
    run_to_dir(&config, oracle, &cut, Some(2)).unwrap();
    let out = quadopt(&["resume", "cut"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    for f in ["manifest.json", "evaluations.csv", "iterations.csv"] {
        assert_eq!(read(&cut.join(f)), read(&whole.join(f)), "{f}");
    }
}

#[test]
fn parallel_jobs_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), &["pqs", "surrogate-ga"]);
    let c = config.to_str().unwrap();
    let a = quadopt(&["run", "--config", c, "--out-dir", "seq"], tmp.path());
    let b = quadopt(&["run", "--config", c, "--out-dir", "par", "--jobs", "3"], tmp.path());
    assert_eq!(a.status.code(), Some(0), "{}", text(&a));
    assert_eq!(b.status.code(), Some(0), "{}", text(&b));
    for f in ["summary.csv", "runs/pqs/seed-1/evaluations.csv", "runs/surrogate-ga/seed-0/iterations.csv"] {
        assert_eq!(read(&tmp.path().join("seq").join(f)), read(&tmp.path().join("par").join(f)), "{f}");
    }
}
