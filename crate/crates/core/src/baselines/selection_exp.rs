use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LayoutStack;
use crate::oracle::{evaluate_batch, BudgetLedger, Candidate, Dataset, EvaluationRecord, Oracle};
use crate::predictor::{Predictor, RidgeTrainer, TrainConfig, Trainer};
use crate::seed::{derive_rng, derive_seed};
use crate::selection::{ensemble_tau, kendall_tau, SelectionPlan};

/// How each round's batch is picked from the masked half.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Split by ranking consistency between successive predictors.
    Css,
    /// The consistency-based split with a fixed tau.
    CssForced(f64),
    /// Best-predicted only.
    TopK,
    /// Uniform over the masked designs; no predictor.
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Css => f.write_str("css"),
            Strategy::CssForced(t) => write!(f, "css-tau{t}"),
            Strategy::TopK => f.write_str("topk"),
            Strategy::Random => f.write_str("random"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionExpConfig {
    pub oracle: String,
    /// Designs simulated once; half train the first predictor, half are masked.
    pub pool: usize,
    pub batch: usize,
    pub repeats: usize,
    pub strategies: Vec<Strategy>,
    /// Leaf cap used to draw the pool.
    pub pool_cap: usize,
    /// Bootstrap members for the first-round consistency estimate.
    pub ensemble: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SelectionExpConfig {
    fn default() -> Self {
        SelectionExpConfig {
            oracle: "synth-hga".into(),
            pool: 1000,
            batch: 20,
            repeats: 20,
            strategies: vec![Strategy::Css, Strategy::TopK, Strategy::Random],
            pool_cap: 32,
            ensemble: 5,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl SelectionExpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool < 4 || self.pool % 2 != 0 {
            return Err(Error::Config(format!("pool size must be even and at least 4, got {}", self.pool)));
        }
        if self.batch == 0 || self.repeats == 0 || self.strategies.is_empty() || self.ensemble < 2 {
            return Err(Error::Config(
                "batch, repeats, strategies and ensemble (>= 2) must be non-empty".into(),
            ));
        }
        self.train.validate()
    }
}

/// Rounds needed per repeat, one column per strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub strategies: Vec<Strategy>,
    /// `rounds[s][r]`: rounds strategy `s` needed in repeat `r`.
    pub rounds: Vec<Vec<usize>>,
    pub masked: usize,
    pub batch: usize,
}

/// Expected rounds for uniform picking: the optimum's batch index averaged
/// over its equally likely positions.
pub fn analytic_random_rounds(masked: usize, batch: usize) -> f64 {
    let mut total = 0.0;
    let mut left = masked;
    let mut k = 1;
    while left > 0 {
        let size = batch.min(left);
        total += (k * size) as f64;
        left -= size;
        k += 1;
    }
    total / masked as f64
}

/// Simulates the pool once, then replays every strategy on the same random
/// halvings.
pub fn selection_efficiency_experiment(
    config: &SelectionExpConfig,
    oracle: Arc<dyn Oracle>,
) -> Result<SelectionTable> {
    config.validate()?;
    let dims = oracle.dims();
    let mut rng = derive_rng(config.seed, "selection-pool", 0);
    let mut seen = HashSet::new();
    let mut picks = Vec::with_capacity(config.pool);
    let mut attempts = 0;
    while picks.len() < config.pool {
        attempts += 1;
        if attempts > 10_000 * config.pool {
            return Err(Error::PoolExhausted {
                requested: config.pool,
                available: picks.len(),
            });
        }
        let layout = LayoutStack::grow_random(dims, config.pool_cap, &mut rng)?;
        let c = Candidate::from_layout(layout);
        if seen.insert(c.design.clone()) {
            picks.push(c);
        }
    }
    let ledger = BudgetLedger::new(config.pool);
    let mut data = Dataset::new();
    evaluate_batch(oracle.as_ref(), picks, &ledger, &mut data, 0)?;
    selection_rounds(data.records(), config)
}

/// The replay on an already simulated pool.
pub fn selection_rounds(pool: &[EvaluationRecord], config: &SelectionExpConfig) -> Result<SelectionTable> {
    config.validate()?;
    if pool.len() != config.pool {
        return Err(Error::LengthMismatch {
            left: pool.len(),
            right: config.pool,
        });
    }
    let trainer = RidgeTrainer {
        config: config.train.clone(),
    };
    let half = pool.len() / 2;
    let mut rounds = vec![Vec::with_capacity(config.repeats); config.strategies.len()];
    for r in 0..config.repeats {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, "split", r as u64));
        let (known, masked) = order.split_at(half);
        for (s, strategy) in config.strategies.iter().enumerate() {
            rounds[s].push(replay(pool, known, masked, *strategy, &trainer, config, r as u64)?);
        }
    }
    Ok(SelectionTable {
        strategies: config.strategies.clone(),
        rounds,
        masked: pool.len() - half,
        batch: config.batch,
    })
}

fn replay(
    pool: &[EvaluationRecord],
    known: &[usize],
    masked: &[usize],
    strategy: Strategy,
    trainer: &dyn Trainer,
    config: &SelectionExpConfig,
    repeat: u64,
) -> Result<usize> {
    let target = masked
        .iter()
        .map(|&i| pool[i].aggregate)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut train: Vec<EvaluationRecord> = known.iter().map(|&i| pool[i].clone()).collect();
    let mut hidden: Vec<usize> = masked.to_vec();
    let mut rng = derive_rng(config.seed, "picks", repeat);
    let mut prev: Option<Arc<dyn Predictor>> = None;
    let mut round = 0;
    loop {
        round += 1;
        let n = config.batch.min(hidden.len());
        let chosen: Vec<usize> = if strategy == Strategy::Random {
            hidden.partial_shuffle(&mut rng, n).0.to_vec()
        } else {
            let seed = derive_seed(config.seed, "train", repeat << 16 | round as u64);
            let model = trainer.train(&train, seed)?;
            let scores: Vec<f64> = hidden
                .iter()
                .map(|&i| model.predict_aggregate(&pool[i].design))
                .collect::<Result<_>>()?;
            let tau = match strategy {
                Strategy::TopK => 1.0,
                Strategy::CssForced(t) => t,
                _ if hidden.len() < 2 => 1.0,
                _ => match &prev {
                    Some(p) => {
                        let old: Vec<f64> = hidden
                            .iter()
                            .map(|&i| p.predict_aggregate(&pool[i].design))
                            .collect::<Result<_>>()?;
                        kendall_tau(&old, &scores)?.tau
                    }
                    None => {
                        let members = trainer.ensemble(&train, derive_seed(config.seed, "ensemble", repeat), config.ensemble)?;
                        let refs: Vec<&dyn Predictor> = members.iter().map(|m| m.as_ref()).collect();
                        let designs: Vec<_> = hidden.iter().map(|&i| pool[i].design.clone()).collect();
                        ensemble_tau(&refs, &designs)?.tau
                    }
                },
            };
            prev = Some(model);
            let plan = SelectionPlan::from_tau(tau, n)?;
            let mut ranked: Vec<usize> = (0..hidden.len()).collect();
            ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            let mut take: Vec<usize> = ranked[..plan.predictor].iter().map(|&k| hidden[k]).collect();
            let mut rest: Vec<usize> = ranked[plan.predictor..].iter().map(|&k| hidden[k]).collect();
            take.extend_from_slice(rest.partial_shuffle(&mut rng, plan.random).0);
            take
        };
        if chosen.iter().any(|&i| pool[i].aggregate == target) {
            return Ok(round);
        }
        hidden.retain(|i| !chosen.contains(i));
        train.extend(chosen.iter().map(|&i| pool[i].clone()));
    }
}
