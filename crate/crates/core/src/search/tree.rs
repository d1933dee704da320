use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::topk::TopKList;
use crate::error::{Error, Result};
use crate::layout::{DesignMatrix, Dims, LayoutStack, Region};
use crate::predictor::{LinearForm, Predictor};
use crate::seed::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Leaf cap per layer for one episode.
    pub max_leaves: usize,
    /// Total action steps, summed over episodes.
    pub steps: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_leaves == 0 || self.steps == 0 || self.top_k == 0 {
            return Err(Error::Config(
                "search needs max_leaves, steps and top_k all at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Resample,
    Split,
    /// Resample because the chosen leaf could not split under the cap.
    Forced,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub steps: usize,
    pub episodes: usize,
    pub resamples: usize,
    pub splits: usize,
    pub forced: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: Action,
    pub leaves: usize,
    pub predicted: f64,
    pub best: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub top: TopKList,
    pub stats: SearchStats,
}

/// Scores the current layout. With an affine predictor the criteria are
/// updated from region sums in O(criteria) per edit; otherwise the design is
/// rebuilt and scored in full.
enum Scorer<'a> {
    Linear {
        form: &'a LinearForm,
        // per criterion, per layer: (rows+1) x (cols+1) prefix sums
        prefix: Vec<Vec<Vec<f64>>>,
        cols: usize,
        values: Vec<f64>,
    },
    Full,
}

impl<'a> Scorer<'a> {
    fn new(predictor: &'a dyn Predictor, dims: Dims) -> Self {
        let Some(form) = predictor.linear_form() else {
            return Scorer::Full;
        };
        let (rows, cols) = (dims.rows, dims.cols);
        let prefix = form
            .pixel_weights
            .iter()
            .map(|w| {
                w.chunks(rows * cols)
                    .map(|layer| {
                        let mut p = vec![0.0; (rows + 1) * (cols + 1)];
                        for i in 0..rows {
                            let mut run = 0.0;
                            for j in 0..cols {
                                run += layer[i * cols + j];
                                p[(i + 1) * (cols + 1) + j + 1] = p[i * (cols + 1) + j + 1] + run;
                            }
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        Scorer::Linear {
            form,
            prefix,
            cols,
            values: Vec::new(),
        }
    }

    fn reset(&mut self, design: &DesignMatrix) {
        if let Scorer::Linear { form, values, .. } = self {
            *values = form.evaluate(design);
        }
    }

    fn change(&mut self, layer: usize, region: Region, from: u8, to: u8) {
        if from == to {
            return;
        }
        if let Scorer::Linear {
            prefix, cols, values, ..
        } = self
        {
            let w = *cols + 1;
            let sign = to as f64 - from as f64;
            for (v, p) in values.iter_mut().zip(prefix.iter()) {
                let p = &p[layer];
                let (r0, r1, c0, c1) = (region.r_start, region.r_end + 1, region.c_start, region.c_end + 1);
                *v += sign * (p[r1 * w + c1] - p[r0 * w + c1] - p[r1 * w + c0] + p[r0 * w + c0]);
            }
        }
    }

    /// Approximate aggregate for screening; `None` for the full path.
    fn approx(&self) -> Option<f64> {
        match self {
            Scorer::Linear { values, .. } => Some(values.iter().copied().fold(f64::INFINITY, f64::min)),
            Scorer::Full => None,
        }
    }
}

// incremental sums drift by a few ulps; screen generously, then rescore exactly
const SCREEN_SLACK: f64 = 1e-9;

fn any_split_fits(stack: &LayoutStack, cap: usize) -> bool {
    stack.layers().iter().any(|layer| {
        let n = layer.leaf_count();
        n < cap
            && layer
                .leaf_ids()
                .iter()
                .any(|&id| layer.split_growth(id).is_some_and(|g| n + g <= cap))
    })
}

/// Progressive tree search guided by `predictor`.
///
/// Each episode starts from root-only layers with random states. A step
/// picks a layer and one of its leaves uniformly, then with equal
/// probability resamples the leaf state or splits it at its midpoints. A
/// leaf whose split would exceed `max_leaves` is resampled instead. The
/// episode ends once no split fits under the cap; episodes repeat until
/// `steps` actions are spent. Designs for which `exclude` returns true never
/// enter the Top-K list.
pub fn tree_search(
    predictor: &dyn Predictor,
    config: &SearchConfig,
    dims: Dims,
    exclude: &dyn Fn(&DesignMatrix) -> bool,
) -> Result<SearchOutcome> {
    run(predictor, config, dims, exclude, None)
}

/// [`tree_search`] that also records one [`TraceRow`] per step.
pub fn tree_search_traced(
    predictor: &dyn Predictor,
    config: &SearchConfig,
    dims: Dims,
    exclude: &dyn Fn(&DesignMatrix) -> bool,
    trace: &mut Vec<TraceRow>,
) -> Result<SearchOutcome> {
    run(predictor, config, dims, exclude, Some(trace))
}

fn run(
    predictor: &dyn Predictor,
    config: &SearchConfig,
    dims: Dims,
    exclude: &dyn Fn(&DesignMatrix) -> bool,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SearchOutcome> {
    config.validate()?;
    dims.validate()?;
    if predictor.dims() != dims {
        return Err(Error::dims(dims, predictor.dims()));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut scorer = Scorer::new(predictor, dims);
    let mut top = TopKList::new(config.top_k);
    let mut stats = SearchStats::default();

    let consider = |stack: &LayoutStack, scorer: &Scorer, top: &mut TopKList| -> Result<f64> {
        let screened = scorer.approx();
        if let Some(a) = screened {
            if !top.would_accept(a + SCREEN_SLACK) {
                return Ok(a);
            }
        }
        let design = stack.reconstruct();
        let score = predictor.predict_aggregate(&design)?;
        if top.would_accept(score) && !exclude(&design) {
            top.insert(stack.clone(), design, score);
        }
        Ok(screened.unwrap_or(score))
    };

    while stats.steps < config.steps {
        stats.episodes += 1;
        let mut stack = LayoutStack::random_roots(dims, &mut rng)?;
        scorer.reset(&stack.reconstruct());
        consider(&stack, &scorer, &mut top)?;

        while stats.steps < config.steps {
            let k = stack.random_layer(&mut rng);
            let layer = stack.layer_mut(k);
            let leaves = layer.leaf_ids();
            let id = leaves[rng.gen_range(0..leaves.len())];
            let old = layer.state(id)?;
            let fits = layer
                .split_growth(id)
                .is_some_and(|g| layer.leaf_count() + g <= config.max_leaves);
            let action = if !fits {
                Action::Forced
            } else if rng.gen::<bool>() {
                Action::Split
            } else {
                Action::Resample
            };
            match action {
                Action::Split => {
                    let children = layer.split_leaf_in_place(id, &mut rng)?;
                    for c in children {
                        scorer.change(k, layer.region(c)?, old, layer.state(c)?);
                    }
                    stats.splits += 1;
                }
                Action::Resample | Action::Forced => {
                    let new = layer.resample_leaf_in_place(id, &mut rng)?;
                    scorer.change(k, layer.region(id)?, old, new);
                    if action == Action::Forced {
                        stats.forced += 1;
                    } else {
                        stats.resamples += 1;
                    }
                }
            }
            stats.steps += 1;
            let predicted = consider(&stack, &scorer, &mut top)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRow {
                    step: stats.steps,
                    action,
                    leaves: stack.total_leaf_count(),
                    predicted,
                    best: top.best().map_or(f64::NEG_INFINITY, |e| e.score),
                });
            }
            if !any_split_fits(&stack, config.max_leaves) {
                break;
            }
        }
    }
    Ok(SearchOutcome { top, stats })
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Dims;
    use crate::oracle::{CountOnesOracle, CriterionVector, EvaluationRecord, Oracle, OracleSpec, SynthOracle};
    use crate::predictor::{train, OraclePredictor, TrainConfig};
    use std::sync::Arc;

    fn cfg(max_leaves: usize, steps: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            max_leaves,
            steps,
            top_k: 10,
            seed,
        }
    }

    fn count_ones(dims: Dims) -> OraclePredictor {
        OraclePredictor(Arc::new(CountOnesOracle::new(dims)))
    }

    fn none(_: &DesignMatrix) -> bool {
        false
    }

    /// Hides the linear form so the search takes the full-scoring path.
    struct Opaque<P>(P);

    impl<P: Predictor> Predictor for Opaque<P> {
        fn dims(&self) -> Dims {
            self.0.dims()
        }
        fn num_criteria(&self) -> usize {
            self.0.num_criteria()
        }
        fn predict(&self, d: &DesignMatrix) -> Result<CriterionVector> {
            self.0.predict(d)
        }
    }

    fn ridge_on_synth() -> crate::predictor::RidgeModel {
        let oracle = SynthOracle::new(OracleSpec::named("synth-hga").unwrap()).unwrap();
        let mut rng = rng_from_seed(1);
        let records: Vec<EvaluationRecord> = (0..120)
            .map(|_| {
                let s = LayoutStack::grow_random(oracle.dims(), 16, &mut rng).unwrap();
                let design = s.reconstruct();
                let criteria = oracle.synth_criteria(&design).unwrap();
                EvaluationRecord {
                    aggregate: criteria.aggregate(),
                    design,
                    layout: Some(s),
                    criteria,
                    iteration: 0,
                    sequence: 0,
                }
            })
            .collect();
        train(&records, &TrainConfig::default()).unwrap()
    }

    #[test]
    fn single_leaf_cap_only_resamples() {
        let dims = Dims::new(4, 4, 1);
        let out = tree_search(&count_ones(dims), &cfg(1, 200, 3), dims, &none).unwrap();
        assert_eq!(out.stats.splits, 0);
        assert_eq!(out.stats.resamples, 0);
        assert_eq!(out.stats.forced, 200);
        assert_eq!(out.stats.episodes, 200);
        assert_eq!(out.top.len(), 2);
        for e in out.top.entries() {
            let ones = e.design.count_ones();
            assert!(ones == 0 || ones == 16);
        }
    }

    #[test]
    fn leaf_cap_is_respected() {
        let dims = Dims::new(12, 12, 2);
        let model = ridge_on_synth_dual();
        for cap in [1, 4, 7, 16, 32] {
            let out = tree_search(&model, &cfg(cap, 3000, cap as u64), dims, &none).unwrap();
            for e in out.top.entries() {
                assert!(e.layout.max_leaf_count() <= cap);
                assert_eq!(e.layout.reconstruct(), e.design);
            }
        }
    }

    fn ridge_on_synth_dual() -> crate::predictor::RidgeModel {
        let dims = Dims::new(12, 12, 2);
        let oracle = SynthOracle::new(OracleSpec::named("synth-dualfss").unwrap()).unwrap();
        let mut rng = rng_from_seed(2);
        let records: Vec<EvaluationRecord> = (0..80)
            .map(|_| {
                let s = LayoutStack::grow_random(dims, 16, &mut rng).unwrap();
                let design = s.reconstruct();
                let criteria = oracle.synth_criteria(&design).unwrap();
                EvaluationRecord {
                    aggregate: criteria.aggregate(),
                    design,
                    layout: Some(s),
                    criteria,
                    iteration: 0,
                    sequence: 0,
                }
            })
            .collect();
        train(&records, &TrainConfig::default()).unwrap()
    }

    #[test]
    fn finds_all_ones_on_count_oracle() {
        let dims = Dims::new(4, 4, 1);
        let p = count_ones(dims);
        let mut hits = 0;
        for seed in 0..100 {
            let out = tree_search(&p, &cfg(16, 100_000, seed), dims, &none).unwrap();
            if out.top.best().unwrap().score == 16.0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn scores_match_predictor_and_are_sorted() {
        let model = ridge_on_synth();
        let dims = model.dims();
        let out = tree_search(&model, &cfg(32, 20_000, 5), dims, &none).unwrap();
        assert_eq!(out.top.len(), 10);
        let entries = out.top.entries();
        assert!(entries.windows(2).all(|w| w[0].score >= w[1].score));
        for e in entries {
            assert_eq!(e.score, model.predict_aggregate(&e.layout.reconstruct()).unwrap());
        }
    }

    #[test]
    fn incremental_and_full_scoring_agree() {
        let model = ridge_on_synth();
        let dims = model.dims();
        let c = cfg(32, 5_000, 9);
        let fast = tree_search(&model, &c, dims, &none).unwrap();
        let slow = tree_search(&Opaque(model.clone()), &c, dims, &none).unwrap();
        assert_eq!(fast.top, slow.top);
        assert_eq!(fast.stats, slow.stats);
    }

    #[test]
    fn action_split_is_even() {
        let dims = Dims::new(15, 20, 1);
        let out = tree_search(&count_ones(dims), &cfg(64, 100_000, 12), dims, &none).unwrap();
        let s = out.stats;
        assert_eq!(s.resamples + s.splits + s.forced, 100_000);
        let ratio = s.resamples as f64 / (s.resamples + s.splits) as f64;
        assert!((ratio - 0.5).abs() <= 0.01, "{ratio}");
    }

    #[test]
    fn deterministic_under_seed() {
        let model = ridge_on_synth();
        let dims = model.dims();
        let a = tree_search(&model, &cfg(16, 4000, 77), dims, &none).unwrap();
        let b = tree_search(&model, &cfg(16, 4000, 77), dims, &none).unwrap();
        assert_eq!(a.top, b.top);
        let c = tree_search(&model, &cfg(16, 4000, 78), dims, &none).unwrap();
        assert_ne!(a.top, c.top);
    }

    #[test]
    fn excluded_designs_never_enter() {
        let dims = Dims::new(2, 2, 1);
        let p = count_ones(dims);
        let banned = |d: &DesignMatrix| d.count_ones() >= 3;
        let out = tree_search(&p, &cfg(4, 5000, 1), dims, &banned).unwrap();
        assert!(out.top.entries().iter().all(|e| e.design.count_ones() < 3));
        assert_eq!(out.top.best().unwrap().score, 2.0);
    }

    #[test]
    fn trace_rows_follow_steps() {
        let dims = Dims::new(6, 6, 1);
        let mut rows = Vec::new();
        let out = tree_search_traced(&count_ones(dims), &cfg(8, 300, 4), dims, &none, &mut rows).unwrap();
        assert_eq!(rows.len(), 300);
        assert!(rows.windows(2).all(|w| w[1].best >= w[0].best && w[1].step == w[0].step + 1));
        assert!(rows.iter().all(|r| r.leaves <= 8));
        assert_eq!(rows.last().unwrap().best, out.top.best().unwrap().score);
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,action,leaves,predicted,best\n"));
        assert_eq!(text.lines().count(), 301);
    }

    #[test]
    fn rejects_bad_config() {
        let dims = Dims::new(3, 3, 1);
        assert!(tree_search(&count_ones(dims), &cfg(0, 10, 0), dims, &none).is_err());
        assert!(tree_search(&count_ones(dims), &cfg(4, 10, 0), Dims::new(3, 4, 1), &none).is_err());
    }
}
