use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LayoutStack;
use crate::oracle::{evaluate_batch, BudgetLedger, Candidate, Dataset, EvaluationRecord, Oracle};
use crate::predictor::{train, Predictor, TrainConfig};
use crate::seed::{derive_rng, derive_seed};
use crate::selection::kendall_tau;
use crate::stats::{mean, std_dev};

/// Predictor rank quality as a function of layout complexity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmaxConfig {
    pub oracle: String,
    pub caps: Vec<usize>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Ridge penalties tried on the validation split.
    pub lambdas: Vec<f64>,
    pub refits: usize,
    pub seed: u64,
}

impl Default for NmaxConfig {
    fn default() -> Self {
        NmaxConfig {
            oracle: "synth-hga".into(),
            caps: vec![16, 32, 64],
            train: 600,
            validation: 200,
            test: 200,
            lambdas: vec![0.01, 0.1, 1.0, 10.0],
            refits: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmaxRow {
    pub cap: usize,
    pub lambda: f64,
    pub tau_mean: f64,
    pub tau_std: f64,
    pub taus: Vec<f64>,
}

fn test_tau(model: &dyn Predictor, test: &[EvaluationRecord]) -> Result<f64> {
    let truth: Vec<f64> = test.iter().map(|r| r.aggregate).collect();
    let pred: Vec<f64> = test
        .iter()
        .map(|r| model.predict_aggregate(&r.design))
        .collect::<Result<_>>()?;
    Ok(kendall_tau(&truth, &pred)?.tau)
}

/// For each cap: simulate designs grown to that cap, pick the ridge penalty
/// on the validation split, then report test-set Kendall tau over bootstrap
/// refits of the training split.
pub fn nmax_tau_sweep(config: &NmaxConfig, oracle: Arc<dyn Oracle>) -> Result<Vec<NmaxRow>> {
    if config.caps.is_empty() || config.lambdas.is_empty() || config.refits < 2 {
        return Err(Error::Config("need caps, lambdas and at least 2 refits".into()));
    }
    if config.train < 2 || config.validation < 2 || config.test < 2 {
        return Err(Error::Config("each split needs at least 2 designs".into()));
    }
    let dims = oracle.dims();
    let total = config.train + config.validation + config.test;
    let mut rows = Vec::with_capacity(config.caps.len());
    for &cap in &config.caps {
        let mut rng = derive_rng(config.seed, "nmax-data", cap as u64);
        let mut seen = HashSet::new();
        let mut picks = Vec::with_capacity(total);
        let mut attempts = 0;
        while picks.len() < total {
            attempts += 1;
            if attempts > 1000 * total {
                return Err(Error::PoolExhausted {
                    requested: total,
                    available: picks.len(),
                });
            }
            let c = Candidate::from_layout(LayoutStack::grow_random(dims, cap, &mut rng)?);
            if seen.insert(c.design.clone()) {
                picks.push(c);
            }
        }
        let mut data = Dataset::new();
        evaluate_batch(oracle.as_ref(), picks, &BudgetLedger::new(total), &mut data, 0)?;
        let records = data.records();
        let (train_set, rest) = records.split_at(config.train);
        let (val_set, test_set) = rest.split_at(config.validation);

        let mut lambda = config.lambdas[0];
        let mut best = f64::NEG_INFINITY;
        for &l in &config.lambdas {
            let cfg = TrainConfig {
                lambda: l,
                ..TrainConfig::default()
            };
            let tau = test_tau(&train(train_set, &cfg)?, val_set)?;
            if tau > best {
                best = tau;
                lambda = l;
            }
        }
        let taus: Vec<f64> = (0..config.refits as u64)
            .map(|i| {
                let cfg = TrainConfig {
                    lambda,
                    bootstrap: true,
                    resample_fraction: 1.0,
                    seed: derive_seed(config.seed, "refit", i),
                };
                test_tau(&train(train_set, &cfg)?, test_set)
            })
            .collect::<Result<_>>()?;
        rows.push(NmaxRow {
            cap,
            lambda,
            tau_mean: mean(&taus).expect("refits >= 2"),
            tau_std: std_dev(&taus).expect("refits >= 2"),
            taus,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_by_id;

    #[test]
    fn small_sweep_is_well_formed() {
        let cfg = NmaxConfig {
            caps: vec![8, 16],
            train: 120,
            validation: 40,
            test: 40,
            refits: 3,
            ..NmaxConfig::default()
        };
        let rows = nmax_tau_sweep(&cfg, oracle_by_id("synth-hga").unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.taus.len(), 3);
            assert!(r.taus.iter().all(|t| (-1.0..=1.0).contains(t)));
            assert!((r.tau_mean - r.taus.iter().sum::<f64>() / 3.0).abs() < 1e-12);
            assert!(cfg.lambdas.contains(&r.lambda));
        }
        let again = nmax_tau_sweep(&cfg, oracle_by_id("synth-hga").unwrap()).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn rejects_degenerate_config() {
        let cfg = NmaxConfig {
            refits: 1,
            ..NmaxConfig::default()
        };
        assert!(nmax_tau_sweep(&cfg, oracle_by_id("synth-hga").unwrap()).is_err());
    }
}
