//! Experiment configuration.
//!
//! A config file is one JSON object:
//!
//! ```json
//! {
//!   "repeats": 10,
//!   "seed": 0,
//!   "out_dir": "out/hga",
//!   "run": { "oracle": "synth-hga", "budget": 1000 },
//!   "baseline": { "pool": 20000 },
//!   "jobs": [
//!     { "method": "pqs" },
//!     { "id": "pqs-n64", "method": "pqs", "run": { "schedule": { "kind": "geometric", "initial": 8, "max": 64 } } },
//!     { "method": "surrogate-ga" }
//!   ],
//!   "nmax": { "caps": [16, 32, 64] },
//!   "selection": { "repeats": 20 },
//!   "report": { "plots": true }
//! }
//! ```
//!
//! Every section is optional. `run` holds loop parameters shared by all jobs;
//! each job may override parts of it. Baselines start from the loop settings
//! (oracle, budget, initial dataset, batch, predictor) and then apply the
//! shared and per-job `baseline` objects. The `nmax` and `selection`
//! sections inherit the oracle from `run`. The top-level `seed` drives every
//! section: repeat `r` of a job runs with seed `seed + r`.
//!
//! Overrides `--a.b.c=value` patch the JSON before it is interpreted. The
//! value is parsed as JSON when possible, otherwise taken as a string;
//! numeric path segments index arrays.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use quadopt_core::baselines::{BaselineConfig, Method, NmaxConfig, SelectionExpConfig};
use quadopt_core::pqs::RunConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Write SVG plots next to the summary tables.
    pub plots: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { plots: true }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(default = "one")]
    repeats: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    run: Map<String, Value>,
    #[serde(default)]
    baseline: Map<String, Value>,
    #[serde(default)]
    jobs: Vec<RawJob>,
    #[serde(default)]
    nmax: Map<String, Value>,
    #[serde(default)]
    selection: Map<String, Value>,
    #[serde(default)]
    report: ReportOptions,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    id: Option<String>,
    method: Method,
    #[serde(default)]
    run: Map<String, Value>,
    #[serde(default)]
    baseline: Map<String, Value>,
}

/// One method with fully resolved parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Job {
    pub id: String,
    pub method: Method,
    pub run: RunConfig,
    pub baseline: BaselineConfig,
}

impl Job {
    /// The job's parameters for one repeat.
    pub fn with_seed(&self, seed: u64) -> Job {
        let mut job = self.clone();
        job.run.seed = seed;
        job.baseline.seed = seed;
        job
    }

    /// The configuration recorded in a run manifest.
    pub fn manifest_config(&self) -> Value {
        let config = match self.method.loop_config(&self.run) {
            Some(run) => serde_json::to_value(run),
            None => serde_json::to_value(&self.baseline),
        };
        config.expect("configs serialize")
    }

    pub fn oracle(&self) -> &str {
        if self.method.is_loop_variant() {
            &self.run.oracle
        } else {
            &self.baseline.oracle
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Experiment {
    pub repeats: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub baseline: BaselineConfig,
    pub jobs: Vec<Job>,
    pub nmax: NmaxConfig,
    pub selection: SelectionExpConfig,
    pub report: ReportOptions,
}

impl Experiment {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeats as u64).map(|r| self.seed + r)
    }

    /// The same experiment with `methods` as its jobs, all using the shared
    /// loop and baseline settings.
    pub fn with_methods(&self, methods: &[Method]) -> Experiment {
        let jobs = methods
            .iter()
            .map(|&method| Job {
                id: method.id().to_string(),
                method,
                run: self.run.clone(),
                baseline: self.baseline.clone(),
            })
            .collect();
        Experiment {
            jobs,
            ..self.clone()
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn parse<T: DeserializeOwned>(value: Value, path: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let at = match (path.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => path.to_string(),
            (false, false) => format!("{path}.{inner}"),
        };
        CliError::Config(format!("{at}: {}", e.inner()))
    })
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn layered<T: Serialize + DeserializeOwned>(base: &T, patches: &[&Map<String, Value>], path: &str) -> Result<T> {
    let mut value = serde_json::to_value(base).map_err(config_err)?;
    for p in patches {
        merge(&mut value, &Value::Object((*p).clone()));
    }
    parse(value, path)
}

/// Parses an override value: JSON if it parses, otherwise a bare string.
fn override_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Applies `key.path=value` to a JSON document, creating objects on the way.
pub fn apply_override(doc: &mut Value, key: &str, value: &str) -> Result<()> {
    let mut cur = doc;
    for part in key.split('.') {
        if part.is_empty() {
            return Err(CliError::Config(format!("override key {key:?} has an empty segment")));
        }
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Config(format!("override {key}: {part:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Config(format!("override {key}: index {idx} out of range ({len} items)")))?
            }
            Value::Null => {
                *cur = Value::Object(Map::new());
                cur.as_object_mut().unwrap().entry(part).or_insert(Value::Null)
            }
            Value::Object(map) => map.entry(part).or_insert(Value::Null),
            _ => return Err(CliError::Config(format!("override {key}: {part:?} is inside a scalar"))),
        };
    }
    *cur = override_value(value);
    Ok(())
}

/// Builds an experiment from a JSON document (already overridden).
pub fn resolve(doc: Value) -> Result<Experiment> {
    let raw: RawExperiment = parse(doc, "")?;
    if raw.repeats == 0 {
        return Err(CliError::Config("repeats: must be at least 1".into()));
    }
    let run: RunConfig = layered(
        &RunConfig {
            seed: raw.seed,
            ..RunConfig::default()
        },
        &[&raw.run],
        "run",
    )?;
    run.validate().map_err(|e| CliError::Config(format!("run: {e}")))?;
    let baseline: BaselineConfig = layered(&BaselineConfig::matching(&run), &[&raw.baseline], "baseline")?;

    let mut jobs = Vec::with_capacity(raw.jobs.len());
    for (i, j) in raw.jobs.iter().enumerate() {
        let path = format!("jobs[{i}]");
        let job_run: RunConfig = layered(&run, &[&j.run], &format!("{path}.run"))?;
        job_run
            .validate()
            .map_err(|e| CliError::Config(format!("{path}.run: {e}")))?;
        let job_baseline: BaselineConfig = layered(
            &BaselineConfig::matching(&job_run),
            &[&raw.baseline, &j.baseline],
            &format!("{path}.baseline"),
        )?;
        job_baseline
            .validate()
            .map_err(|e| CliError::Config(format!("{path}.baseline: {e}")))?;
        let id = j.id.clone().unwrap_or_else(|| j.method.id().to_string());
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(CliError::Config(format!("{path}.id: {id:?} is not a usable directory name")));
        }
        if jobs.iter().any(|k: &Job| k.id == id) {
            return Err(CliError::Config(format!("{path}.id: duplicate job id {id:?}")));
        }
        jobs.push(Job {
            id,
            method: j.method,
            run: job_run,
            baseline: job_baseline,
        });
    }

    let nmax: NmaxConfig = layered(
        &NmaxConfig {
            oracle: run.oracle.clone(),
            seed: raw.seed,
            ..NmaxConfig::default()
        },
        &[&raw.nmax],
        "nmax",
    )?;
    let selection: SelectionExpConfig = layered(
        &SelectionExpConfig {
            oracle: run.oracle.clone(),
            seed: raw.seed,
            ..SelectionExpConfig::default()
        },
        &[&raw.selection],
        "selection",
    )?;
    selection
        .validate()
        .map_err(|e| CliError::Config(format!("selection: {e}")))?;

    Ok(Experiment {
        repeats: raw.repeats,
        seed: raw.seed,
        out_dir: raw.out_dir,
        run,
        baseline,
        jobs,
        nmax,
        selection,
        report: raw.report,
    })
}

/// Reads a config file (or starts from `{}`), applies overrides in order
/// and resolves it.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Experiment> {
    let mut doc = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    resolve(doc)
}
