//! On-disk run artifacts: a JSON manifest, the evaluation log and the
//! per-iteration log. Both CSV files start with a `#` line naming the method
//! and master seed, so a mismatched pair is caught on load.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{deserialize_stack, serialize_stack, DesignMatrix, Dims};
use crate::oracle::{CriterionVector, Dataset, EvaluationRecord, Oracle};
use crate::pqs::{IterationLog, Pqs, RunConfig, RunResult};

pub const MANIFEST: &str = "manifest.json";
pub const EVALUATIONS: &str = "evaluations.csv";
pub const ITERATIONS: &str = "iterations.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: String,
    pub seed: u64,
    pub oracle: String,
    pub dims: Dims,
    pub budget: usize,
    pub criteria: usize,
    /// Method parameters as given; a [`RunConfig`] for the loop variants.
    pub config: serde_json::Value,
    pub complete: bool,
}

fn header(method: &str, seed: u64) -> String {
    format!("# quadopt run method={method} seed={seed}\n")
}

fn parse_header(path: &Path, text: &str) -> Result<(String, u64)> {
    let bad = || Error::Inconsistent(format!("{} lacks a run header", path.display()));
    let line = text.lines().next().ok_or_else(bad)?;
    let rest = line.strip_prefix("# quadopt run ").ok_or_else(bad)?;
    let mut method = None;
    let mut seed = None;
    for part in rest.split_whitespace() {
        if let Some(m) = part.strip_prefix("method=") {
            method = Some(m.to_string());
        } else if let Some(s) = part.strip_prefix("seed=") {
            seed = s.parse().ok();
        }
    }
    Ok((method.ok_or_else(bad)?, seed.ok_or_else(bad)?))
}

/// Writes via a temporary file and a rename so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn evaluations_csv(result: &RunResult, criteria: usize) -> Result<Vec<u8>> {
    let mut out = header(&result.method, result.seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut head = vec!["sequence".to_string(), "iteration".into(), "design".into(), "layout".into()];
        head.extend((1..=criteria).map(|k| format!("y{k}")));
        head.push("aggregate".into());
        w.write_record(&head)?;
        for r in result.dataset.records() {
            let mut row = vec![
                r.sequence.to_string(),
                r.iteration.to_string(),
                r.design.to_bitstring(),
                r.layout.as_ref().map(serialize_stack).unwrap_or_default(),
            ];
            row.extend(r.criteria.values().iter().map(f64::to_string));
            row.push(r.aggregate.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn iterations_csv(result: &RunResult) -> Result<Vec<u8>> {
    let mut out = header(&result.method, result.seed).into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(&mut out);
        if result.log.is_empty() {
            w.write_record([
                "iteration",
                "cap",
                "n",
                "tau",
                "tau_plus",
                "predictor_picks",
                "random_picks",
                "simulated",
                "best",
                "used",
            ])?;
        }
        for row in &result.log {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// Writes all three artifacts into `dir` (created if needed).
pub fn write_run(dir: &Path, oracle: &dyn Oracle, config: serde_json::Value, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        method: result.method.clone(),
        seed: result.seed,
        oracle: oracle.id().to_string(),
        dims: oracle.dims(),
        budget: result.budget,
        criteria: oracle.num_criteria(),
        config,
        complete: result.is_complete(),
    };
    write_atomic(&dir.join(EVALUATIONS), &evaluations_csv(result, manifest.criteria)?)?;
    write_atomic(&dir.join(ITERATIONS), &iterations_csv(result)?)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?)
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<(PathBuf, String)> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)?;
    let (method, seed) = parse_header(&path, &text)?;
    if method != manifest.method || seed != manifest.seed {
        return Err(Error::Inconsistent(format!(
            "{} belongs to method {method} seed {seed}, manifest says method {} seed {}",
            path.display(),
            manifest.method,
            manifest.seed
        )));
    }
    Ok((path, text))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, what: &str) -> Result<T> {
    rec.get(k)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Inconsistent(format!("bad {what} field in evaluation log")))
}

/// Loads a persisted run. Evaluations past the last logged iteration (a
/// checkpoint torn between the two files) are dropped; they are reproduced
/// exactly when the run resumes.
pub fn read_run(dir: &Path) -> Result<(Manifest, RunResult)> {
    let manifest = read_manifest(dir)?;
    let (_, evals) = read_checked(dir, EVALUATIONS, &manifest)?;
    let (_, iters) = read_checked(dir, ITERATIONS, &manifest)?;

    let log: Vec<IterationLog> = reader(&iters).deserialize().collect::<std::result::Result<_, _>>()?;
    let p = manifest.criteria;
    let mut records = Vec::new();
    for (line, rec) in reader(&evals).records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 + p {
            return Err(Error::Inconsistent(format!(
                "evaluation row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                5 + p
            )));
        }
        let sequence: usize = field(&rec, 0, "sequence")?;
        let iteration: usize = field(&rec, 1, "iteration")?;
        if iteration > log.len() {
            continue;
        }
        let design = DesignMatrix::from_bitstring(manifest.dims, &rec[2])?;
        let layout = match &rec[3] {
            "" => None,
            text => Some(deserialize_stack(text)?),
        };
        if layout.as_ref().is_some_and(|l| l.reconstruct() != design) {
            return Err(Error::Inconsistent(format!("row {}: layout does not match design", line + 1)));
        }
        let values: Vec<f64> = (0..p).map(|k| field(&rec, 4 + k, "criterion")).collect::<Result<_>>()?;
        let criteria = CriterionVector::new(values)?;
        let aggregate: f64 = field(&rec, 4 + p, "aggregate")?;
        if aggregate != criteria.aggregate() {
            return Err(Error::Inconsistent(format!("row {}: aggregate is not the minimum", line + 1)));
        }
        if sequence != records.len() + 1 {
            return Err(Error::Inconsistent(format!("row {}: sequence {sequence} out of order", line + 1)));
        }
        records.push(EvaluationRecord {
            design,
            layout,
            criteria,
            aggregate,
            iteration,
            sequence,
        });
    }
    let dataset = Dataset::from_records(records);
    if dataset.len() > manifest.budget {
        return Err(Error::Inconsistent("more evaluations than the budget".into()));
    }
    if let Some(last) = log.last() {
        if last.used != dataset.len() {
            return Err(Error::Inconsistent(format!(
                "iteration log ends at {} simulations, evaluation log has {}",
                last.used,
                dataset.len()
            )));
        }
    }
    let result = RunResult {
        method: manifest.method.clone(),
        seed: manifest.seed,
        budget: manifest.budget,
        dataset,
        log,
        elapsed: Default::default(),
    };
    Ok((manifest, result))
}

/// Runs a loop configuration, checkpointing into `dir` after the initial
/// dataset and after every iteration.
pub fn run_to_dir(
    config: &RunConfig,
    oracle: Arc<dyn Oracle>,
    dir: &Path,
    stop_after: Option<usize>,
) -> Result<RunResult> {
    let value = serde_json::to_value(config)?;
    let pqs = Pqs::new(config.clone(), oracle.clone())?;
    pqs.run(None, stop_after, &mut |state| write_run(dir, oracle.as_ref(), value.clone(), state))
}

/// Continues a persisted loop run to its budget. A complete run is returned
/// as stored.
pub fn resume(dir: &Path, oracle: Arc<dyn Oracle>) -> Result<RunResult> {
    let (manifest, stored) = read_run(dir)?;
    if manifest.oracle != oracle.id() || manifest.dims != oracle.dims() {
        return Err(Error::Inconsistent(format!(
            "run was made with oracle {} ({}), not {}",
            manifest.oracle,
            manifest.dims,
            oracle.id()
        )));
    }
    if manifest.complete && stored.is_complete() {
        return Ok(stored);
    }
    let config: RunConfig = serde_json::from_value(manifest.config.clone())?;
    if config.seed != manifest.seed {
        return Err(Error::Inconsistent(format!(
            "manifest seed {} disagrees with its configuration seed {}",
            manifest.seed, config.seed
        )));
    }
    let pqs = Pqs::new(config, oracle.clone())?;
    let value = manifest.config.clone();
    pqs.run(Some(stored), None, &mut |state| write_run(dir, oracle.as_ref(), value.clone(), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_by_id;
    use crate::pqs::run_pqs;

    fn cfg(seed: u64) -> RunConfig {
        RunConfig {
            oracle: "synth-dualfss".into(),
            budget: 90,
            initial: 40,
            batch: 10,
            search_steps: 2000,
            probe: 20,
            seed,
            ..RunConfig::default()
        }
    }

    fn files(dir: &Path) -> Vec<Vec<u8>> {
        [MANIFEST, EVALUATIONS, ITERATIONS]
            .iter()
            .map(|f| fs::read(dir.join(f)).unwrap())
            .collect()
    }

    #[test]
    fn round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(1);
        let oracle = oracle_by_id(&c.oracle).unwrap();
        let r = run_to_dir(&c, oracle, tmp.path(), None).unwrap();
        let (m, back) = read_run(tmp.path()).unwrap();
        assert!(m.complete);
        assert_eq!(m.criteria, 2);
        assert_eq!(back.log, r.log);
        assert_eq!(back.dataset.records(), r.dataset.records());
        let text = fs::read_to_string(tmp.path().join(EVALUATIONS)).unwrap();
        assert!(text.starts_with("# quadopt run method=pqs seed=1\nsequence,iteration,design,layout,y1,y2,aggregate\n"));
    }

    #[test]
    fn interrupted_then_resumed_is_identical() {
        let c = cfg(2);
        let oracle = oracle_by_id(&c.oracle).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_to_dir(&c, oracle.clone(), a.path(), None).unwrap();
        run_to_dir(&c, oracle.clone(), b.path(), Some(3)).unwrap();
        assert!(!read_manifest(b.path()).unwrap().complete);
        let resumed = resume(b.path(), oracle.clone()).unwrap();
        assert_eq!(files(a.path()), files(b.path()));
        let direct = run_pqs(&c, oracle.clone()).unwrap();
        assert_eq!(resumed.log, direct.log);
        // resuming a finished run changes nothing
        resume(b.path(), oracle).unwrap();
        assert_eq!(files(a.path()), files(b.path()));
    }

    #[test]
    fn torn_checkpoint_is_recovered() {
        let c = cfg(3);
        let oracle = oracle_by_id(&c.oracle).unwrap();
        let full = tempfile::tempdir().unwrap();
        run_to_dir(&c, oracle.clone(), full.path(), None).unwrap();
        let torn = tempfile::tempdir().unwrap();
        run_to_dir(&c, oracle.clone(), torn.path(), Some(2)).unwrap();
        // evaluations from iteration 3 written, iteration log not yet
        let (_, complete) = read_run(full.path()).unwrap();
        let mut partial = complete.clone();
        partial.log.truncate(2);
        let keep = partial.log[1].used + 10;
        partial.dataset = Dataset::from_records(complete.dataset.records()[..keep].to_vec());
        fs::write(torn.path().join(EVALUATIONS), evaluations_csv(&partial, 2).unwrap()).unwrap();
        resume(torn.path(), oracle).unwrap();
        assert_eq!(files(full.path()), files(torn.path()));
    }

    #[test]
    fn inconsistent_state_is_rejected() {
        let c = cfg(4);
        let oracle = oracle_by_id(&c.oracle).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_to_dir(&c, oracle.clone(), dir.path(), Some(1)).unwrap();

        let path = dir.path().join(ITERATIONS);
        let good = fs::read_to_string(&path).unwrap();
        fs::write(&path, good.replace("seed=4", "seed=5")).unwrap();
        assert!(matches!(resume(dir.path(), oracle.clone()), Err(Error::Inconsistent(_))));
        fs::write(&path, &good).unwrap();

        let mpath = dir.path().join(MANIFEST);
        let m = fs::read_to_string(&mpath).unwrap();
        fs::write(&mpath, m.replace("\"seed\": 4", "\"seed\": 9")).unwrap();
        assert!(matches!(resume(dir.path(), oracle.clone()), Err(Error::Inconsistent(_))));
        fs::write(&mpath, &m).unwrap();

        let epath = dir.path().join(EVALUATIONS);
        let e = fs::read_to_string(&epath).unwrap();
        let mut lines: Vec<&str> = e.lines().collect();
        lines.remove(5);
        fs::write(&epath, lines.join("\n") + "\n").unwrap();
        assert!(matches!(resume(dir.path(), oracle.clone()), Err(Error::Inconsistent(_))));
        fs::write(&epath, &e).unwrap();

        let other = oracle_by_id("synth-hga").unwrap();
        assert!(matches!(resume(dir.path(), other), Err(Error::Inconsistent(_))));
        assert!(resume(dir.path(), oracle).is_ok());
    }
}
