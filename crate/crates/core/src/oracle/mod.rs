//! Expensive-evaluation abstraction: criteria, the aggregate objective,
//! budget accounting, caching, and synthetic simulator families.

mod budget;
mod criteria;
mod dataset;
mod synth;

use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

pub use budget::BudgetLedger;
pub use criteria::{aggregate_objective, CriterionVector};
pub use dataset::{Candidate, Dataset, EvaluationRecord};
pub use synth::{Band, OracleSpec, ScaleAmplitudes, Sense, SynthOracle, FREQ_POINTS};

use crate::error::{Error, Result};
use crate::layout::{DesignMatrix, Dims};

/// The expensive ground-truth evaluator.
pub trait Oracle: Send + Sync {
    fn id(&self) -> &str;
    fn dims(&self) -> Dims;
    fn num_criteria(&self) -> usize;
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector>;
}

impl<O: Oracle + ?Sized> Oracle for Arc<O> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn num_criteria(&self) -> usize {
        (**self).num_criteria()
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        (**self).criteria(design)
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn num_criteria(&self) -> usize {
        (**self).num_criteria()
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        (**self).criteria(design)
    }
}

fn check_dims(oracle: &dyn Oracle, design: &DesignMatrix) -> Result<()> {
    if design.dims() != oracle.dims() {
        return Err(Error::dims(oracle.dims(), design.dims()));
    }
    Ok(())
}

/// Evaluates one design. Cached designs are returned without spending
/// budget; a miss costs one simulation and is appended to `dataset`.
pub fn evaluate(
    oracle: &dyn Oracle,
    candidate: Candidate,
    ledger: &BudgetLedger,
    dataset: &mut Dataset,
    iteration: usize,
) -> Result<EvaluationRecord> {
    let mut out = evaluate_batch(oracle, vec![candidate], ledger, dataset, iteration)?;
    Ok(out.pop().expect("one result per candidate"))
}

/// Evaluates a batch. Cache misses are simulated concurrently, then
/// committed to the ledger and dataset in submission order, so the result is
/// independent of completion order. The batch is rejected up front if its
/// misses do not fit in the remaining budget.
pub fn evaluate_batch(
    oracle: &dyn Oracle,
    candidates: Vec<Candidate>,
    ledger: &BudgetLedger,
    dataset: &mut Dataset,
    iteration: usize,
) -> Result<Vec<EvaluationRecord>> {
    let mut misses: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, c) in candidates.iter().enumerate() {
        check_dims(oracle, &c.design)?;
        if !dataset.contains(&c.design) && seen.insert(&c.design) {
            misses.push(k);
        }
    }
    if misses.len() > ledger.remaining() {
        return Err(Error::BudgetExhausted {
            used: ledger.used(),
            cap: ledger.cap(),
        });
    }
    let computed: Vec<CriterionVector> = misses
        .par_iter()
        .map(|&k| oracle.criteria(&candidates[k].design))
        .collect::<Result<_>>()?;
    for (&k, criteria) in misses.iter().zip(computed) {
        ledger.try_spend(1)?;
        let c = &candidates[k];
        let aggregate = criteria.aggregate();
        dataset.push(EvaluationRecord {
            design: c.design.clone(),
            layout: c.layout.clone(),
            criteria,
            aggregate,
            iteration,
            sequence: ledger.used(),
        });
    }
    Ok(candidates
        .iter()
        .map(|c| dataset.get(&c.design).expect("evaluated").clone())
        .collect())
}

/// `y = [number of ones]`. Its unique optimum is the all-ones design.
#[derive(Clone, Debug)]
pub struct CountOnesOracle {
    dims: Dims,
    id: String,
}

impl CountOnesOracle {
    pub fn new(dims: Dims) -> Self {
        CountOnesOracle {
            dims,
            id: format!("count-ones-{}x{}x{}", dims.rows, dims.cols, dims.layers),
        }
    }
}

impl Oracle for CountOnesOracle {
    fn id(&self) -> &str {
        &self.id
    }
    fn dims(&self) -> Dims {
        self.dims
    }
    fn num_criteria(&self) -> usize {
        1
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        check_dims(self, design)?;
        CriterionVector::new(vec![design.count_ones() as f64])
    }
}

/// `y = [number of cells equal to a target design]`.
#[derive(Clone, Debug)]
pub struct TargetMatchOracle {
    target: DesignMatrix,
}

impl TargetMatchOracle {
    pub fn new(target: DesignMatrix) -> Self {
        TargetMatchOracle { target }
    }

    pub fn target(&self) -> &DesignMatrix {
        &self.target
    }
}

impl Oracle for TargetMatchOracle {
    fn id(&self) -> &str {
        "target-match"
    }
    fn dims(&self) -> Dims {
        self.target.dims()
    }
    fn num_criteria(&self) -> usize {
        1
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        check_dims(self, design)?;
        let hits = design
            .cells()
            .iter()
            .zip(self.target.cells())
            .filter(|(a, b)| a == b)
            .count();
        CriterionVector::new(vec![hits as f64])
    }
}

/// Adds a fixed sleep to every evaluation of the wrapped oracle.
pub struct WithLatency<O> {
    inner: O,
    latency: Duration,
}

impl<O: Oracle> WithLatency<O> {
    pub fn new(inner: O, latency: Duration) -> Self {
        WithLatency { inner, latency }
    }
}

impl<O: Oracle> Oracle for WithLatency<O> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn dims(&self) -> Dims {
        self.inner.dims()
    }
    fn num_criteria(&self) -> usize {
        self.inner.num_criteria()
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        self.inner.criteria(design)
    }
}

/// Resolves a benchmark id: `synth-dualfss`, `synth-hga`,
/// `count-ones-RxC` or `count-ones-RxCxL`.
pub fn oracle_by_id(id: &str) -> Result<Arc<dyn Oracle>> {
    if let Some(spec) = OracleSpec::named(id) {
        return Ok(Arc::new(SynthOracle::new(spec)?));
    }
    if let Some(rest) = id.strip_prefix("count-ones-") {
        let parts: Vec<usize> = rest
            .split('x')
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad oracle id {id:?}")))?;
        let dims = match parts.as_slice() {
            [r, c] => Dims::new(*r, *c, 1),
            [r, c, l] => Dims::new(*r, *c, *l),
            _ => return Err(Error::Config(format!("bad oracle id {id:?}"))),
        };
        dims.validate()?;
        return Ok(Arc::new(CountOnesOracle::new(dims)));
    }
    Err(Error::Config(format!("unknown oracle id {id:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn cand(design: DesignMatrix) -> Candidate {
        Candidate::from_design(design)
    }

    #[test]
    fn cache_hits_are_free() {
        let oracle = CountOnesOracle::new(Dims::new(3, 3, 1));
        let ledger = BudgetLedger::new(5);
        let mut data = Dataset::new();
        let d = DesignMatrix::random(oracle.dims(), &mut rng_from_seed(0));
        let a = evaluate(&oracle, cand(d.clone()), &ledger, &mut data, 0).unwrap();
        let b = evaluate(&oracle, cand(d), &ledger, &mut data, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(ledger.used(), 1);
        assert_eq!(data.len(), 1);
        assert_eq!(a.sequence, 1);
    }

    #[test]
    fn exhausted_budget_rejects_misses_but_serves_hits() {
        let oracle = CountOnesOracle::new(Dims::new(2, 2, 1));
        let ledger = BudgetLedger::new(1);
        let mut data = Dataset::new();
        let zero = DesignMatrix::zeros(oracle.dims());
        evaluate(&oracle, cand(zero.clone()), &ledger, &mut data, 0).unwrap();
        let mut one = zero.clone();
        one.flip(0, 0, 0);
        assert!(matches!(
            evaluate(&oracle, cand(one), &ledger, &mut data, 0),
            Err(Error::BudgetExhausted { used: 1, cap: 1 })
        ));
        assert!(evaluate(&oracle, cand(zero), &ledger, &mut data, 0).is_ok());
    }

    #[test]
    fn thousand_distinct_designs_use_thousand() {
        let oracle = CountOnesOracle::new(Dims::new(4, 4, 1));
        let ledger = BudgetLedger::new(1000);
        let mut data = Dataset::new();
        for k in 0..1000u32 {
            let cells = (0..16).map(|b| ((k >> b) & 1) as u8).collect();
            let d = DesignMatrix::from_cells(oracle.dims(), cells).unwrap();
            evaluate(&oracle, cand(d), &ledger, &mut data, 0).unwrap();
        }
        assert_eq!(ledger.used(), 1000);
    }

    #[test]
    fn batch_is_ordered_and_atomic() {
        let oracle = WithLatency::new(CountOnesOracle::new(Dims::new(3, 3, 1)), Duration::from_millis(2));
        let mut rng = rng_from_seed(3);
        let designs: Vec<_> = (0..6).map(|_| DesignMatrix::random(oracle.dims(), &mut rng)).collect();
        let mut batch: Vec<_> = designs.iter().cloned().map(cand).collect();
        batch.push(cand(designs[0].clone()));
        let ledger = BudgetLedger::new(10);
        let mut data = Dataset::new();
        let out = evaluate_batch(&oracle, batch, &ledger, &mut data, 2).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(ledger.used(), 6);
        for (k, r) in data.records().iter().enumerate() {
            assert_eq!(r.design, designs[k]);
            assert_eq!(r.sequence, k + 1);
            assert_eq!(r.iteration, 2);
        }
        let tight = BudgetLedger::new(2);
        let more: Vec<_> = designs.iter().cloned().map(cand).collect();
        assert!(evaluate_batch(&oracle, more, &tight, &mut Dataset::new(), 0).is_err());
        assert_eq!(tight.used(), 0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let oracle = CountOnesOracle::new(Dims::new(3, 3, 1));
        let ledger = BudgetLedger::new(1);
        let bad = DesignMatrix::zeros(Dims::new(3, 4, 1));
        assert!(matches!(
            evaluate(&oracle, cand(bad), &ledger, &mut Dataset::new(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn oracle_ids_resolve() {
        assert_eq!(oracle_by_id("synth-hga").unwrap().dims(), Dims::new(15, 20, 1));
        assert_eq!(oracle_by_id("synth-dualfss").unwrap().dims(), Dims::new(12, 12, 2));
        assert_eq!(oracle_by_id("count-ones-4x4").unwrap().dims(), Dims::new(4, 4, 1));
        assert!(oracle_by_id("nope").is_err());
        assert!(oracle_by_id("count-ones-4").is_err());
    }

    #[test]
    fn best_prefers_earliest_on_ties() {
        let oracle = CountOnesOracle::new(Dims::new(1, 2, 1));
        let ledger = BudgetLedger::new(4);
        let mut data = Dataset::new();
        for cells in [vec![1, 0], vec![0, 1], vec![0, 0]] {
            let d = DesignMatrix::from_cells(oracle.dims(), cells).unwrap();
            evaluate(&oracle, cand(d), &ledger, &mut data, 0).unwrap();
        }
        assert_eq!(data.best().unwrap().sequence, 1);
    }
}
