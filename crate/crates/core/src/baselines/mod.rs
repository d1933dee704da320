//! Comparison optimizers and ablation harnesses sharing the oracle, budget
//! and predictor infrastructure of the main loop.

mod ga;
mod nmax;
mod selection_exp;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use ga::{Ga, GaConfig};
pub use nmax::{nmax_tau_sweep, NmaxConfig, NmaxRow};
pub use selection_exp::{
    analytic_random_rounds, selection_efficiency_experiment, SelectionExpConfig, SelectionTable, Strategy,
};

use crate::error::{Error, Result};
use crate::layout::{DesignMatrix, Dims};
use crate::oracle::{evaluate_batch, BudgetLedger, Candidate, Dataset, Oracle};
use crate::pqs::{initial_dataset, run_pqs, IterationLog, RunConfig, RunResult, Sampler, SelectionMode};
use crate::predictor::{make_trainer, PredictorKind, TrainConfig};
use crate::seed::{derive_rng, derive_seed, Rng};

/// Every optimizer the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pqs,
    PqsTopKOnly,
    PqsRandomOnly,
    PqsNoQss,
    Rs,
    SurrogateRs,
    SurrogateGa,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pqs,
        Method::PqsTopKOnly,
        Method::PqsRandomOnly,
        Method::PqsNoQss,
        Method::Rs,
        Method::SurrogateRs,
        Method::SurrogateGa,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Pqs => "pqs",
            Method::PqsTopKOnly => "pqs-topk-only",
            Method::PqsRandomOnly => "pqs-random-only",
            Method::PqsNoQss => "pqs-no-qss",
            Method::Rs => "rs",
            Method::SurrogateRs => "surrogate-rs",
            Method::SurrogateGa => "surrogate-ga",
        }
    }

    pub fn is_loop_variant(self) -> bool {
        matches!(
            self,
            Method::Pqs | Method::PqsTopKOnly | Method::PqsRandomOnly | Method::PqsNoQss
        )
    }

    /// Applies this variant's switches to a loop configuration.
    pub fn loop_config(self, base: &RunConfig) -> Option<RunConfig> {
        let (selection, sampler) = match self {
            Method::Pqs => (SelectionMode::Mixed, Sampler::Quadtree),
            Method::PqsTopKOnly => (SelectionMode::TopKOnly, Sampler::Quadtree),
            Method::PqsRandomOnly => (SelectionMode::RandomOnly, Sampler::Quadtree),
            Method::PqsNoQss => (SelectionMode::Mixed, Sampler::Pixel),
            _ => return None,
        };
        Some(RunConfig {
            selection,
            sampler,
            ..base.clone()
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown method id {s:?}")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters for the non-loop baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub oracle: String,
    pub budget: usize,
    /// Shared initial dataset size for the surrogate baselines.
    pub initial: usize,
    /// Leaf cap used to draw the shared initial dataset.
    pub initial_cap: usize,
    /// Designs simulated per iteration (K).
    pub batch: usize,
    /// Random candidates scored per surrogate-RS iteration (M).
    pub pool: usize,
    pub ga: GaConfig,
    pub train: TrainConfig,
    pub predictor: PredictorKind,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            oracle: "synth-hga".into(),
            budget: 1000,
            initial: 300,
            initial_cap: 8,
            batch: 10,
            pool: 20_000,
            ga: GaConfig::default(),
            train: TrainConfig::default(),
            predictor: PredictorKind::Ridge,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    /// The baseline settings that mirror a loop configuration, so paired
    /// runs share the initial dataset.
    pub fn matching(run: &RunConfig) -> Self {
        BaselineConfig {
            oracle: run.oracle.clone(),
            budget: run.budget,
            initial: run.initial,
            initial_cap: run.schedule.cap(0),
            batch: run.batch,
            train: run.train.clone(),
            predictor: run.predictor,
            seed: run.seed,
            ..BaselineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.pool == 0 || self.initial_cap == 0 {
            return Err(Error::Config("batch, pool and initial_cap must be at least 1".into()));
        }
        if self.initial == 0 || self.initial > self.budget {
            return Err(Error::Config(format!(
                "initial dataset size {} must be in 1..={}",
                self.initial, self.budget
            )));
        }
        self.ga.validate()?;
        self.train.validate()
    }
}

fn log_row(iteration: usize, simulated: usize, dataset: &Dataset, ledger: &BudgetLedger) -> IterationLog {
    IterationLog {
        iteration,
        cap: None,
        n: None,
        tau: None,
        tau_plus: None,
        predictor_picks: 0,
        random_picks: 0,
        simulated,
        best: dataset.best().map_or(f64::NEG_INFINITY, |r| r.aggregate),
        used: ledger.used(),
    }
}

/// `budget` uniform pixel designs drawn with replacement; repeated draws are
/// cache hits and cost nothing. One log row per `batch` draws.
pub fn random_search(oracle: &dyn Oracle, budget: usize, batch: usize, seed: u64) -> Result<RunResult> {
    if batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let started = Instant::now();
    let dims = oracle.dims();
    let ledger = BudgetLedger::new(budget);
    let mut dataset = Dataset::new();
    let mut rng = derive_rng(seed, "rs", 0);
    let mut log = Vec::new();
    let mut drawn = 0;
    while drawn < budget {
        let n = batch.min(budget - drawn);
        let picks: Vec<Candidate> = (0..n)
            .map(|_| Candidate::from_design(DesignMatrix::random(dims, &mut rng)))
            .collect();
        drawn += n;
        let before = ledger.used();
        evaluate_batch(oracle, picks, &ledger, &mut dataset, log.len() + 1)?;
        let mut row = log_row(log.len(), ledger.used() - before, &dataset, &ledger);
        row.random_picks = n;
        log.push(row);
    }
    Ok(RunResult {
        method: Method::Rs.id().into(),
        seed,
        budget,
        dataset,
        log,
        elapsed: started.elapsed(),
    })
}

/// The `k` best-scored distinct, unevaluated designs, best first. Equal
/// scores keep the earlier design.
fn top_unevaluated(
    scored: impl Iterator<Item = Result<(DesignMatrix, f64)>>,
    k: usize,
    dataset: &Dataset,
) -> Result<Vec<DesignMatrix>> {
    let mut top: Vec<(f64, DesignMatrix)> = Vec::with_capacity(k + 1);
    for item in scored {
        let (d, s) = item?;
        let admits = top.len() < k || top.last().is_some_and(|(worst, _)| s > *worst);
        if admits && !dataset.contains(&d) && !top.iter().any(|(_, x)| x == &d) {
            let at = top.partition_point(|(t, _)| *t >= s);
            top.insert(at, (s, d));
            top.truncate(k);
        }
    }
    Ok(top.into_iter().map(|(_, d)| d).collect())
}

/// Fills `picks` up to `n` with fresh random pixel designs.
fn fill_random(picks: &mut Vec<DesignMatrix>, n: usize, dims: Dims, dataset: &Dataset, rng: &mut Rng) -> Result<usize> {
    let mut added = 0;
    let mut attempts = 0;
    while picks.len() < n {
        attempts += 1;
        if attempts > 10_000 * n {
            return Err(Error::PoolExhausted {
                requested: n,
                available: picks.len(),
            });
        }
        let d = DesignMatrix::random(dims, rng);
        if !dataset.contains(&d) && !picks.contains(&d) {
            picks.push(d);
            added += 1;
        }
    }
    Ok(added)
}

fn start(config: &BaselineConfig, oracle: &dyn Oracle) -> Result<(BudgetLedger, Dataset)> {
    config.validate()?;
    let ledger = BudgetLedger::new(config.budget);
    let dataset = initial_dataset(oracle, config.initial, config.initial_cap, config.seed, &ledger)?;
    Ok((ledger, dataset))
}

/// Each iteration scores `pool` random pixel designs with a freshly trained
/// predictor and simulates the best `batch` of them.
pub fn surrogate_rs(config: &BaselineConfig, oracle: Arc<dyn Oracle>) -> Result<RunResult> {
    let started = Instant::now();
    let (ledger, mut dataset) = start(config, oracle.as_ref())?;
    let trainer = make_trainer(config.predictor, &config.train, oracle.clone());
    let dims = oracle.dims();
    let mut log = Vec::new();
    while !ledger.is_exhausted() {
        let t = log.len() as u64;
        let model = trainer.train(dataset.records(), derive_seed(config.seed, "train", t))?;
        let mut rng = derive_rng(config.seed, "srs-pool", t);
        let k = config.batch.min(ledger.remaining());
        let scored = (0..config.pool).map(|_| {
            let d = DesignMatrix::random(dims, &mut rng);
            let s = model.predict_aggregate(&d)?;
            Ok((d, s))
        });
        let mut picks = top_unevaluated(scored, k, &dataset)?;
        let predicted = picks.len();
        let random = fill_random(&mut picks, k, dims, &dataset, &mut rng)?;
        let n = picks.len();
        evaluate_batch(
            oracle.as_ref(),
            picks.into_iter().map(Candidate::from_design).collect(),
            &ledger,
            &mut dataset,
            log.len() + 1,
        )?;
        let mut row = log_row(log.len(), n, &dataset, &ledger);
        row.predictor_picks = predicted;
        row.random_picks = random;
        log.push(row);
    }
    Ok(RunResult {
        method: Method::SurrogateRs.id().into(),
        seed: config.seed,
        budget: config.budget,
        dataset,
        log,
        elapsed: started.elapsed(),
    })
}

/// A GA over pixel genomes with the predictor as fitness. Every generation
/// the `batch` best-predicted unevaluated individuals are simulated and the
/// predictor is retrained before the next generation.
pub fn surrogate_ga(config: &BaselineConfig, oracle: Arc<dyn Oracle>) -> Result<RunResult> {
    let started = Instant::now();
    let (ledger, mut dataset) = start(config, oracle.as_ref())?;
    let trainer = make_trainer(config.predictor, &config.train, oracle.clone());
    let dims = oracle.dims();
    let mut ga_rng = derive_rng(config.seed, "ga", 0);
    let mut ga = Ga::new(config.ga.clone(), dims.cells(), &mut ga_rng)?;
    let mut log = Vec::new();
    while !ledger.is_exhausted() {
        let t = log.len() as u64;
        let model = trainer.train(dataset.records(), derive_seed(config.seed, "train", t))?;
        let designs: Vec<DesignMatrix> = ga
            .population()
            .iter()
            .map(|g| DesignMatrix::from_cells(dims, g.clone()))
            .collect::<Result<_>>()?;
        let fitness: Vec<f64> = designs
            .iter()
            .map(|d| model.predict_aggregate(d))
            .collect::<Result<_>>()?;
        let k = config.batch.min(ledger.remaining());
        let scored = designs.into_iter().zip(fitness.iter().copied()).map(Ok);
        let mut picks = top_unevaluated(scored, k, &dataset)?;
        let predicted = picks.len();
        let mut fill_rng = derive_rng(config.seed, "ga-fill", t);
        let random = fill_random(&mut picks, k, dims, &dataset, &mut fill_rng)?;
        let n = picks.len();
        evaluate_batch(
            oracle.as_ref(),
            picks.into_iter().map(Candidate::from_design).collect(),
            &ledger,
            &mut dataset,
            log.len() + 1,
        )?;
        ga.step(&fitness, &mut ga_rng)?;
        let mut row = log_row(log.len(), n, &dataset, &ledger);
        row.predictor_picks = predicted;
        row.random_picks = random;
        log.push(row);
    }
    Ok(RunResult {
        method: Method::SurrogateGa.id().into(),
        seed: config.seed,
        budget: config.budget,
        dataset,
        log,
        elapsed: started.elapsed(),
    })
}

/// Runs `method` with loop parameters from `run` and baseline parameters
/// from `baseline`.
pub fn run_method(
    method: Method,
    run: &RunConfig,
    baseline: &BaselineConfig,
    oracle: Arc<dyn Oracle>,
) -> Result<RunResult> {
    match method {
        Method::Rs => random_search(oracle.as_ref(), baseline.budget, baseline.batch, baseline.seed),
        Method::SurrogateRs => surrogate_rs(baseline, oracle),
        Method::SurrogateGa => surrogate_ga(baseline, oracle),
        loop_variant => run_pqs(&loop_variant.loop_config(run).expect("loop variant"), oracle),
    }
}
