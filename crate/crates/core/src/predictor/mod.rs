//! Surrogate predictors: the trait the search consumes, the reference ridge
//! regressor, and bootstrap ensembles.

mod ridge;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ridge::{bootstrap_ensemble, bootstrap_ensemble_with_seeds, train, RidgeModel, TrainConfig};

use crate::error::{Error, Result};
use crate::layout::{DesignMatrix, Dims};
use crate::oracle::{CriterionVector, EvaluationRecord, Oracle};
use crate::seed::derive_seed;

/// Criteria that are affine in the pixels: `y_k = b_k + w_k . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearForm {
    pub dims: Dims,
    /// One weight per cell (layer-major, row-major) for every criterion.
    pub pixel_weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl LinearForm {
    pub fn evaluate(&self, design: &DesignMatrix) -> Vec<f64> {
        self.pixel_weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| {
                b + design
                    .cells()
                    .iter()
                    .zip(w)
                    .filter(|(&x, _)| x == 1)
                    .map(|(_, w)| w)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// A trained surrogate `f_theta`. Implementations are immutable once built
/// and safe to share across threads.
pub trait Predictor: Send + Sync {
    fn dims(&self) -> Dims;
    fn num_criteria(&self) -> usize;
    fn predict(&self, design: &DesignMatrix) -> Result<CriterionVector>;

    /// `O(f(x))`: the worst predicted criterion.
    fn predict_aggregate(&self, design: &DesignMatrix) -> Result<f64> {
        Ok(self.predict(design)?.aggregate())
    }

    fn predict_batch(&self, designs: &[DesignMatrix]) -> Result<Vec<CriterionVector>> {
        designs.iter().map(|d| self.predict(d)).collect()
    }

    /// Exposes an affine pixel form when the model has one, letting search
    /// loops score incremental edits in O(1).
    fn linear_form(&self) -> Option<&LinearForm> {
        None
    }
}

/// Builds predictors from evaluated data.
pub trait Trainer: Send + Sync {
    fn id(&self) -> &str;
    fn train(&self, records: &[EvaluationRecord], seed: u64) -> Result<Arc<dyn Predictor>>;

    /// `count` independently seeded members, used to gauge agreement before
    /// there is a previous model to compare against.
    fn ensemble(&self, records: &[EvaluationRecord], seed: u64, count: usize) -> Result<Vec<Arc<dyn Predictor>>> {
        (0..count as u64)
            .map(|i| self.train(records, derive_seed(seed, "member", i)))
            .collect()
    }
}

/// Ridge regression on multi-scale pooled features.
#[derive(Clone, Debug)]
pub struct RidgeTrainer {
    pub config: TrainConfig,
}

impl Trainer for RidgeTrainer {
    fn id(&self) -> &str {
        "ridge"
    }

    fn train(&self, records: &[EvaluationRecord], seed: u64) -> Result<Arc<dyn Predictor>> {
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        Ok(Arc::new(train(records, &config)?))
    }

    fn ensemble(&self, records: &[EvaluationRecord], seed: u64, count: usize) -> Result<Vec<Arc<dyn Predictor>>> {
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        Ok(bootstrap_ensemble(records, &config, count)?
            .into_iter()
            .map(|m| Arc::new(m) as Arc<dyn Predictor>)
            .collect())
    }
}

/// The ground-truth oracle used as its own predictor. Useful as a perfect
/// ranker in tests and sanity experiments; never trained.
#[derive(Clone)]
pub struct OraclePredictor(pub Arc<dyn Oracle>);

impl Predictor for OraclePredictor {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn num_criteria(&self) -> usize {
        self.0.num_criteria()
    }
    fn predict(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        self.0.criteria(design)
    }
}

#[derive(Clone)]
pub struct OracleTrainer(pub Arc<dyn Oracle>);

impl Trainer for OracleTrainer {
    fn id(&self) -> &str {
        "oracle"
    }
    fn train(&self, _records: &[EvaluationRecord], _seed: u64) -> Result<Arc<dyn Predictor>> {
        Ok(Arc::new(OraclePredictor(self.0.clone())))
    }
}

/// Predictor selection in run configurations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    #[default]
    Ridge,
    /// Oracle-as-predictor; for controlled experiments only.
    Oracle,
}

pub fn make_trainer(
    kind: PredictorKind,
    config: &TrainConfig,
    oracle: Arc<dyn Oracle>,
) -> Arc<dyn Trainer> {
    match kind {
        PredictorKind::Ridge => Arc::new(RidgeTrainer {
            config: config.clone(),
        }),
        PredictorKind::Oracle => Arc::new(OracleTrainer(oracle)),
    }
}

pub(crate) fn check_dims(expected: Dims, design: &DesignMatrix) -> Result<()> {
    if design.dims() != expected {
        return Err(Error::dims(expected, design.dims()));
    }
    Ok(())
}
