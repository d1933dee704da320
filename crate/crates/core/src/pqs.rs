//! The outer optimization loop: train a surrogate on everything simulated so
//! far, search layouts with it, pick a mixed batch by ranking consistency,
//! simulate, and repeat until the budget is spent.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{DesignMatrix, Dims, LayoutStack};
use crate::oracle::{evaluate_batch, BudgetLedger, Candidate, Dataset, EvaluationRecord, Oracle};
use crate::predictor::{make_trainer, Predictor, PredictorKind, TrainConfig, Trainer};
use crate::search::{refine_top_k, tree_search, CapSchedule, SearchConfig, TopKList};
use crate::seed::{derive_rng, derive_seed, Rng};
use crate::selection::{ensemble_tau, kendall_tau, mixed_select, ConsistencyReport, Scored, SelectionPlan};

/// How predictor and random picks are mixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Split by the clamped ranking consistency.
    #[default]
    Mixed,
    /// Always trust the predictor.
    #[serde(rename = "topk-only")]
    TopKOnly,
    /// Never trust the predictor.
    RandomOnly,
}

/// Where candidate designs come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Predictor-guided tree search plus split-line refinement.
    #[default]
    Quadtree,
    /// Uniform pixel designs scored by the predictor.
    Pixel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub oracle: String,
    /// Hard cap on simulations, initial dataset included.
    pub budget: usize,
    pub initial: usize,
    /// Designs simulated per outer iteration.
    pub batch: usize,
    /// Tree-search action steps per outer iteration.
    pub search_steps: usize,
    pub top_k: usize,
    pub refine_steps: usize,
    pub schedule: CapSchedule,
    pub train: TrainConfig,
    pub predictor: PredictorKind,
    pub selection: SelectionMode,
    pub sampler: Sampler,
    /// Fresh layouts scored alongside the Top-K when measuring consistency.
    pub probe: usize,
    /// Bootstrap members used for the first consistency estimate.
    pub ensemble: usize,
    /// Candidate count for the pixel sampler.
    pub pixel_pool: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            oracle: "synth-hga".into(),
            budget: 1000,
            initial: 300,
            batch: 10,
            search_steps: 100_000,
            top_k: 10,
            refine_steps: crate::search::DEFAULT_REFINE_STEPS,
            schedule: CapSchedule::geometric(32),
            train: TrainConfig::default(),
            predictor: PredictorKind::Ridge,
            selection: SelectionMode::Mixed,
            sampler: Sampler::Quadtree,
            probe: 50,
            ensemble: 5,
            pixel_pool: 20_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.initial == 0 {
            return bad("initial dataset size must be at least 1");
        }
        if self.initial > self.budget {
            return Err(Error::Config(format!(
                "initial dataset size {} exceeds the budget {}",
                self.initial, self.budget
            )));
        }
        if self.batch == 0 || self.top_k == 0 || self.search_steps == 0 {
            return bad("batch, top_k and search_steps must be at least 1");
        }
        if self.ensemble < 2 {
            return bad("ensemble needs at least 2 members");
        }
        if self.sampler == Sampler::Pixel && self.pixel_pool == 0 {
            return bad("pixel_pool must be at least 1");
        }
        self.schedule.validate()?;
        self.train.validate()
    }

    pub fn method_id(&self) -> &'static str {
        match (self.sampler, self.selection) {
            (Sampler::Pixel, _) => "pqs-no-qss",
            (_, SelectionMode::TopKOnly) => "pqs-topk-only",
            (_, SelectionMode::RandomOnly) => "pqs-random-only",
            _ => "pqs",
        }
    }
}

/// One row per outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Leaf cap in force, for tree-based samplers.
    pub cap: Option<usize>,
    /// Candidates both predictors ranked.
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub tau_plus: Option<f64>,
    pub predictor_picks: usize,
    pub random_picks: usize,
    pub simulated: usize,
    pub best: f64,
    pub used: usize,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub method: String,
    pub seed: u64,
    pub budget: usize,
    pub dataset: Dataset,
    pub log: Vec<IterationLog>,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.dataset.best()
    }

    pub fn used(&self) -> usize {
        self.dataset.len()
    }

    /// Whether the budget is spent.
    pub fn is_complete(&self) -> bool {
        self.dataset.len() >= self.budget
    }

    /// Best aggregate after each simulation, in evaluation order.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.dataset
            .records()
            .iter()
            .map(|r| {
                best = best.max(r.aggregate);
                best
            })
            .collect()
    }
}

/// Uniform quadtree growth to the cap in force; the initial dataset and the
/// random picks are drawn this way.
pub fn sample_layout(dims: Dims, cap: usize, rng: &mut Rng) -> Result<Candidate> {
    Ok(Candidate::from_layout(LayoutStack::grow_random(dims, cap, rng)?))
}

pub fn sample_pixels(dims: Dims, rng: &mut Rng) -> Result<Candidate> {
    Ok(Candidate::from_design(DesignMatrix::random(dims, rng)))
}

const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Simulates `count` distinct designs drawn by quadtree growth at `cap`.
/// The same seed gives every method the same initial dataset.
pub fn initial_dataset(
    oracle: &dyn Oracle,
    count: usize,
    cap: usize,
    seed: u64,
    ledger: &BudgetLedger,
) -> Result<Dataset> {
    let dims = oracle.dims();
    let mut rng = derive_rng(seed, "initial", 0);
    let mut picks = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while picks.len() < count {
        attempts += 1;
        if attempts > MAX_DRAW_ATTEMPTS * count.max(1) {
            return Err(Error::PoolExhausted {
                requested: count,
                available: picks.len(),
            });
        }
        let c = sample_layout(dims, cap, &mut rng)?;
        if seen.insert(c.design.clone()) {
            picks.push(c);
        }
    }
    let mut dataset = Dataset::new();
    evaluate_batch(oracle, picks, ledger, &mut dataset, 0)?;
    Ok(dataset)
}

/// Runs the full loop from scratch.
pub fn run_pqs(config: &RunConfig, oracle: Arc<dyn Oracle>) -> Result<RunResult> {
    Pqs::new(config.clone(), oracle)?.run(None, None, &mut |_| Ok(()))
}

/// Loop driver with resume, early stop and per-iteration checkpoints.
pub struct Pqs {
    config: RunConfig,
    oracle: Arc<dyn Oracle>,
    trainer: Arc<dyn Trainer>,
}

impl Pqs {
    pub fn new(config: RunConfig, oracle: Arc<dyn Oracle>) -> Result<Self> {
        config.validate()?;
        let trainer = make_trainer(config.predictor, &config.train, oracle.clone());
        Ok(Pqs {
            config,
            oracle,
            trainer,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Runs (or continues `from`) until the budget is spent or `stop_after`
    /// outer iterations have been logged. `checkpoint` sees the state after
    /// the initial dataset and after every iteration.
    pub fn run(
        &self,
        from: Option<RunResult>,
        stop_after: Option<usize>,
        checkpoint: &mut dyn FnMut(&RunResult) -> Result<()>,
    ) -> Result<RunResult> {
        let started = Instant::now();
        let cfg = &self.config;
        let oracle = self.oracle.as_ref();
        let dims = oracle.dims();

        let mut state = match from {
            Some(prev) => {
                self.check_resumable(&prev)?;
                prev
            }
            None => {
                let ledger = BudgetLedger::new(cfg.budget);
                let dataset = initial_dataset(oracle, cfg.initial, cfg.schedule.cap(0), cfg.seed, &ledger)?;
                let state = RunResult {
                    method: cfg.method_id().into(),
                    seed: cfg.seed,
                    budget: cfg.budget,
                    dataset,
                    log: Vec::new(),
                    elapsed: Duration::ZERO,
                };
                checkpoint(&state)?;
                state
            }
        };
        let base_elapsed = state.elapsed;
        let ledger = BudgetLedger::with_used(cfg.budget, state.dataset.len())?;

        // the previous iteration's model, rebuilt deterministically on resume
        let mut prev: Option<Arc<dyn Predictor>> = match state.log.len() {
            0 => None,
            t => {
                let data = state.dataset.prefix_before(t);
                Some(self.trainer.train(data.records(), derive_seed(cfg.seed, "train", t as u64 - 1))?)
            }
        };

        while !ledger.is_exhausted() && stop_after.map_or(true, |s| state.log.len() < s) {
            let t = state.log.len();
            let (row, model) = self.iteration(t, prev.as_deref(), &mut state.dataset, &ledger, dims)?;
            state.log.push(row);
            state.elapsed = base_elapsed + started.elapsed();
            checkpoint(&state)?;
            prev = Some(model);
        }
        state.elapsed = base_elapsed + started.elapsed();
        Ok(state)
    }

    fn check_resumable(&self, prev: &RunResult) -> Result<()> {
        let cfg = &self.config;
        if prev.seed != cfg.seed || prev.budget != cfg.budget || prev.method != cfg.method_id() {
            return Err(Error::Inconsistent(format!(
                "persisted run (method {}, seed {}, budget {}) does not match the configuration",
                prev.method, prev.seed, prev.budget
            )));
        }
        if prev.dataset.len() < cfg.initial.min(cfg.budget) {
            return Err(Error::Inconsistent("initial dataset is incomplete".into()));
        }
        Ok(())
    }

    fn iteration(
        &self,
        t: usize,
        prev: Option<&dyn Predictor>,
        dataset: &mut Dataset,
        ledger: &BudgetLedger,
        dims: Dims,
    ) -> Result<(IterationLog, Arc<dyn Predictor>)> {
        let cfg = &self.config;
        let tag = t as u64;
        let cap = cfg.schedule.cap(t);
        let model = self
            .trainer
            .train(dataset.records(), derive_seed(cfg.seed, "train", tag))?;

        let top = self.candidates(model.as_ref(), dataset, cap, dims, tag)?;
        let mut ranked: Vec<Scored> = top
            .into_entries()
            .into_iter()
            .map(|e| Scored {
                candidate: Candidate {
                    design: e.design,
                    layout: Some(e.layout),
                },
                score: e.score,
            })
            .collect();

        let mut probe_rng = derive_rng(cfg.seed, "probe", tag);
        let mut seen: HashSet<DesignMatrix> = ranked.iter().map(|s| s.candidate.design.clone()).collect();
        for _ in 0..cfg.probe {
            let c = self.draw(dims, cap, &mut probe_rng)?;
            if seen.insert(c.design.clone()) {
                let score = model.predict_aggregate(&c.design)?;
                ranked.push(Scored { candidate: c, score });
            }
        }

        let designs: Vec<DesignMatrix> = ranked.iter().map(|s| s.candidate.design.clone()).collect();
        let report = if designs.len() < 2 {
            None
        } else {
            Some(match prev {
                None => {
                    let members = self.trainer.ensemble(
                        dataset.records(),
                        derive_seed(cfg.seed, "ensemble", tag),
                        cfg.ensemble,
                    )?;
                    let refs: Vec<&dyn Predictor> = members.iter().map(|m| m.as_ref()).collect();
                    ensemble_tau(&refs, &designs)?
                }
                Some(p) => {
                    let old: Vec<f64> = designs.iter().map(|d| p.predict_aggregate(d)).collect::<Result<_>>()?;
                    let new: Vec<f64> = ranked.iter().map(|s| s.score).collect();
                    kendall_tau(&old, &new)?
                }
            })
        };

        let trust = match cfg.selection {
            SelectionMode::Mixed => report.map_or(0.0, |r: ConsistencyReport| r.tau),
            SelectionMode::TopKOnly => 1.0,
            SelectionMode::RandomOnly => 0.0,
        };
        let plan = SelectionPlan::from_tau(trust, cfg.batch.min(ledger.remaining()))?;
        let mut pick_rng = derive_rng(cfg.seed, "random", tag);
        let picks = mixed_select(&ranked, &plan, dataset, &mut pick_rng, MAX_DRAW_ATTEMPTS, |rng| {
            self.draw(dims, cap, rng)
        })?;
        let simulated = picks.len();
        evaluate_batch(self.oracle.as_ref(), picks, ledger, dataset, t + 1)?;

        let row = IterationLog {
            iteration: t,
            cap: (cfg.sampler == Sampler::Quadtree).then_some(cap),
            n: report.map(|r| r.n),
            tau: report.map(|r| r.tau),
            tau_plus: report.map(|r| r.tau_plus),
            predictor_picks: plan.predictor,
            random_picks: plan.random,
            simulated,
            best: dataset.best().map_or(f64::NEG_INFINITY, |r| r.aggregate),
            used: ledger.used(),
        };
        Ok((row, model))
    }

    fn draw(&self, dims: Dims, cap: usize, rng: &mut Rng) -> Result<Candidate> {
        match self.config.sampler {
            Sampler::Quadtree => sample_layout(dims, cap, rng),
            Sampler::Pixel => sample_pixels(dims, rng),
        }
    }

    fn candidates(
        &self,
        model: &dyn Predictor,
        dataset: &Dataset,
        cap: usize,
        dims: Dims,
        tag: u64,
    ) -> Result<TopKList> {
        let cfg = &self.config;
        let exclude = |d: &DesignMatrix| dataset.contains(d);
        match cfg.sampler {
            Sampler::Quadtree => {
                let search = SearchConfig {
                    max_leaves: cap,
                    steps: cfg.search_steps,
                    top_k: cfg.top_k,
                    seed: derive_seed(cfg.seed, "search", tag),
                };
                let mut top = tree_search(model, &search, dims, &exclude)?.top;
                refine_top_k(
                    &mut top,
                    model,
                    cfg.refine_steps,
                    derive_seed(cfg.seed, "refine", tag),
                    &exclude,
                )?;
                Ok(top)
            }
            Sampler::Pixel => {
                let mut rng = derive_rng(cfg.seed, "pixel-pool", tag);
                let mut top = TopKList::new(cfg.top_k);
                for _ in 0..cfg.pixel_pool {
                    let design = DesignMatrix::random(dims, &mut rng);
                    let score = model.predict_aggregate(&design)?;
                    if top.would_accept(score) && !exclude(&design) {
                        let layout = LayoutStack::new(
                            (0..dims.layers)
                                .map(|k| pixel_layout(&design, k))
                                .collect::<Result<_>>()?,
                        )?;
                        top.insert(layout, design, score);
                    }
                }
                Ok(top)
            }
        }
    }
}

/// Full-depth quadtree reproducing one layer of a pixel design exactly.
fn pixel_layout(design: &DesignMatrix, layer: usize) -> Result<crate::layout::QuadtreeLayout> {
    use crate::layout::QuadtreeLayout;
    let dims = design.dims();
    let mut rng = crate::seed::rng_from_seed(0);
    let mut l = QuadtreeLayout::new(dims.rows, dims.cols, 0)?;
    let mut pending = vec![0usize];
    while let Some(id) = pending.pop() {
        let region = l.region(id)?;
        if region.is_unit() {
            l.set_state_in_place(id, design.get(layer, region.r_start, region.c_start))?;
        } else {
            pending.extend(l.split_leaf_in_place(id, &mut rng)?);
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_by_id;

    fn small(seed: u64) -> RunConfig {
        RunConfig {
            oracle: "count-ones-4x4".into(),
            budget: 80,
            initial: 30,
            batch: 10,
            search_steps: 3000,
            probe: 20,
            seed,
            ..RunConfig::default()
        }
    }

    fn run(cfg: &RunConfig) -> RunResult {
        run_pqs(cfg, oracle_by_id(&cfg.oracle).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_budget_runs_no_iterations() {
        let cfg = RunConfig {
            budget: 30,
            ..small(1)
        };
        let r = run(&cfg);
        assert!(r.log.is_empty());
        assert_eq!(r.used(), 30);
    }

    #[test]
    fn iteration_count_and_budget() {
        let r = run(&small(2));
        assert_eq!(r.log.len(), 5);
        assert_eq!(r.used(), 80);
        assert!(r.log.windows(2).all(|w| w[1].best >= w[0].best));
        for row in &r.log {
            assert_eq!(row.predictor_picks + row.random_picks, row.simulated);
        }
        let best = r.dataset.records().iter().map(|x| x.aggregate).fold(f64::MIN, f64::max);
        assert_eq!(r.best().unwrap().aggregate, best);
    }

    #[test]
    fn final_iteration_truncates() {
        let r = run(&RunConfig {
            budget: 75,
            ..small(3)
        });
        assert_eq!(r.used(), 75);
        assert_eq!(r.log.last().unwrap().simulated, 5);
    }

    #[test]
    fn designs_respect_the_cap_schedule() {
        let cfg = RunConfig {
            oracle: "synth-dualfss".into(),
            budget: 120,
            initial: 60,
            search_steps: 2000,
            schedule: CapSchedule::Geometric { initial: 4, max: 16 },
            ..small(4)
        };
        let r = run(&cfg);
        for rec in r.dataset.records() {
            let cap = cfg.schedule.cap(rec.iteration.saturating_sub(1));
            assert!(rec.layout.as_ref().unwrap().max_leaf_count() <= cap);
        }
    }

    #[test]
    fn deterministic() {
        let a = run(&small(5));
        let b = run(&small(5));
        assert_eq!(a.log, b.log);
        assert_eq!(a.dataset.records(), b.dataset.records());
    }

    #[test]
    fn stop_and_resume_matches() {
        let cfg = small(6);
        let full = run(&cfg);
        let pqs = Pqs::new(cfg.clone(), oracle_by_id(&cfg.oracle).unwrap()).unwrap();
        let partial = pqs.run(None, Some(2), &mut |_| Ok(())).unwrap();
        assert_eq!(partial.log.len(), 2);
        let resumed = pqs.run(Some(partial), None, &mut |_| Ok(())).unwrap();
        assert_eq!(resumed.log, full.log);
        assert_eq!(resumed.dataset.records(), full.dataset.records());
        let again = pqs.run(Some(resumed.clone()), None, &mut |_| Ok(())).unwrap();
        assert_eq!(again.log, resumed.log);
    }

    #[test]
    fn variants() {
        let topk = run(&RunConfig {
            selection: SelectionMode::TopKOnly,
            ..small(7)
        });
        assert!(topk.log.iter().all(|r| r.random_picks == 0));
        assert_eq!(topk.method, "pqs-topk-only");
        let random = run(&RunConfig {
            selection: SelectionMode::RandomOnly,
            ..small(7)
        });
        assert!(random.log.iter().all(|r| r.predictor_picks == 0));
        let pixel = run(&RunConfig {
            sampler: Sampler::Pixel,
            pixel_pool: 500,
            ..small(7)
        });
        assert_eq!(pixel.used(), 80);
        assert!(pixel.log.iter().all(|r| r.cap.is_none()));
        // every method starts from the same simulated designs
        let base = run(&small(7));
        for other in [&topk, &random, &pixel] {
            assert_eq!(other.dataset.records()[..30], base.dataset.records()[..30]);
        }
    }

    #[test]
    fn pixel_layout_reproduces_design() {
        let dims = Dims::new(5, 7, 2);
        let d = DesignMatrix::random(dims, &mut crate::seed::rng_from_seed(1));
        let s = LayoutStack::new(vec![pixel_layout(&d, 0).unwrap(), pixel_layout(&d, 1).unwrap()]).unwrap();
        assert_eq!(s.reconstruct(), d);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig {
            initial: 2000,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            batch: 0,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"budgett": 5}"#).unwrap_err();
        assert!(err.to_string().contains("budgett"));
        let cfg: RunConfig = serde_json::from_str(r#"{"budget": 500, "selection": "topk-only"}"#).unwrap();
        assert_eq!(cfg.budget, 500);
        assert_eq!(cfg.selection, SelectionMode::TopKOnly);
    }
}
