use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_dims, LinearForm, Predictor};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FEATURE_DEF_ID};
use crate::layout::{DesignMatrix, Dims};
use crate::oracle::{CriterionVector, EvaluationRecord};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Ridge penalty on the feature weights; the intercept is not penalised.
    pub lambda: f64,
    /// Fit on a resample (with replacement) of the data.
    pub bootstrap: bool,
    pub resample_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            bootstrap: false,
            resample_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.resample_fraction > 0.0 && self.resample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "resample fraction must be in (0, 1], got {}",
                self.resample_fraction
            )));
        }
        Ok(())
    }
}

/// Per-criterion ridge regression on multi-scale pooled features.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RidgeModel {
    pub feature_def: String,
    pub dims: Dims,
    pub lambda: f64,
    pub fingerprint: String,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    #[serde(skip)]
    cache: Option<Cache>,
}

#[derive(Clone, Debug)]
struct Cache {
    features: FeatureMap,
    linear: LinearForm,
}

impl PartialEq for RidgeModel {
    fn eq(&self, other: &Self) -> bool {
        self.feature_def == other.feature_def
            && self.dims == other.dims
            && self.lambda == other.lambda
            && self.fingerprint == other.fingerprint
            && self.weights == other.weights
            && self.intercepts == other.intercepts
    }
}

impl RidgeModel {
    fn finish(mut self) -> Result<Self> {
        if self.feature_def != FEATURE_DEF_ID {
            return Err(Error::Config(format!("unknown feature definition {:?}", self.feature_def)));
        }
        let features = FeatureMap::new(self.dims)?;
        if self.weights.is_empty()
            || self.weights.len() != self.intercepts.len()
            || self.weights.iter().any(|w| w.len() != features.len())
        {
            return Err(Error::dims(
                format!("{} weights per criterion", features.len()),
                "malformed weight table",
            ));
        }
        let linear = LinearForm {
            dims: self.dims,
            pixel_weights: self.weights.iter().map(|w| features.pixel_weights(w)).collect(),
            intercepts: self.intercepts.clone(),
        };
        self.cache = Some(Cache { features, linear });
        Ok(self)
    }

    fn cache(&self) -> &Cache {
        self.cache.as_ref().expect("model is finished at construction")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RidgeModel = serde_json::from_str(text)?;
        model.finish()
    }
}

impl Predictor for RidgeModel {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn num_criteria(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        check_dims(self.dims, design)?;
        let phi = self.cache().features.compute(design)?;
        let values = self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(&phi).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        CriterionVector::new(values)
    }

    fn linear_form(&self) -> Option<&LinearForm> {
        Some(&self.cache().linear)
    }
}

fn fingerprint(rows: &[&EvaluationRecord]) -> String {
    let mut h = Sha256::new();
    for r in rows {
        h.update(r.design.to_bitstring().as_bytes());
        for v in r.criteria.values() {
            h.update(v.to_le_bytes());
        }
        h.update(b";");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fits one ridge model per criterion. Records are sorted by design before
/// fitting, so the result does not depend on dataset order.
pub fn train(records: &[EvaluationRecord], config: &TrainConfig) -> Result<RidgeModel> {
    config.validate()?;
    if records.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: records.len(),
        });
    }
    let dims = records[0].design.dims();
    let p = records[0].criteria.len();
    for r in records {
        check_dims(dims, &r.design)?;
        if r.criteria.len() != p {
            return Err(Error::dims(format!("{p} criteria"), r.criteria.len()));
        }
    }

    let mut rows: Vec<&EvaluationRecord> = if config.bootstrap {
        let mut rng = rng_from_seed(config.seed);
        let m = ((records.len() as f64 * config.resample_fraction).round() as usize).max(2);
        (0..m).map(|_| &records[rng.gen_range(0..records.len())]).collect()
    } else {
        records.iter().collect()
    };
    rows.sort_by(|a, b| a.design.cells().cmp(b.design.cells()));

    let features = FeatureMap::new(dims)?;
    let n = rows.len();
    let d = features.len();
    let mut x = DMatrix::<f64>::zeros(n, d);
    let mut buf = vec![0.0; d];
    for (i, r) in rows.iter().enumerate() {
        features.compute_into(&r.design, &mut buf)?;
        for (j, &v) in buf.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let mut y = DMatrix::<f64>::zeros(n, p);
    for (i, r) in rows.iter().enumerate() {
        for (k, &v) in r.criteria.values().iter().enumerate() {
            y[(i, k)] = v;
        }
    }

    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let y_mean: Vec<f64> = (0..p).map(|k| y.column(k).mean()).collect();
    for j in 0..d {
        let m = x_mean[j];
        x.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    for k in 0..p {
        let m = y_mean[k];
        y.column_mut(k).iter_mut().for_each(|v| *v -= m);
    }

    let w = if n >= d {
        let mut gram = x.tr_mul(&x);
        for j in 0..d {
            gram[(j, j)] += config.lambda;
        }
        let rhs = x.tr_mul(&y);
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal equations are not positive definite".into()))?;
        chol.solve(&rhs)
    } else {
        let mut gram = &x * x.transpose();
        for i in 0..n {
            gram[(i, i)] += config.lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge kernel system is not positive definite".into()))?;
        x.tr_mul(&chol.solve(&y))
    };

    let weights: Vec<Vec<f64>> = (0..p).map(|k| w.column(k).iter().copied().collect()).collect();
    let intercepts: Vec<f64> = (0..p)
        .map(|k| y_mean[k] - weights[k].iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    if weights.iter().flatten().chain(&intercepts).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge weights"));
    }

    RidgeModel {
        feature_def: FEATURE_DEF_ID.to_string(),
        dims,
        lambda: config.lambda,
        fingerprint: fingerprint(&rows),
        weights,
        intercepts,
        cache: None,
    }
    .finish()
}

/// `count` members, each fitted on its own seeded bootstrap resample.
pub fn bootstrap_ensemble(
    records: &[EvaluationRecord],
    config: &TrainConfig,
    count: usize,
) -> Result<Vec<RidgeModel>> {
    let seeds: Vec<u64> = (0..count as u64)
        .map(|i| derive_seed(config.seed, "bootstrap", i))
        .collect();
    bootstrap_ensemble_with_seeds(records, config, &seeds)
}

pub fn bootstrap_ensemble_with_seeds(
    records: &[EvaluationRecord],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<RidgeModel>> {
    if seeds.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            found: seeds.len(),
        });
    }
    seeds
        .iter()
        .map(|&seed| {
            let member = TrainConfig {
                bootstrap: true,
                resample_fraction: if config.bootstrap { config.resample_fraction } else { 1.0 },
                seed,
                ..config.clone()
            };
            train(records, &member)
        })
        .collect()
}
