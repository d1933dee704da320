//! Ranking consistency between successive predictors and the mixed
//! exploit/explore pick of designs to simulate.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::DesignMatrix;
use crate::oracle::{Candidate, Dataset};
use crate::predictor::Predictor;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub tau: f64,
    pub n: usize,
    /// `tau` clamped to `[0, 1]`.
    pub tau_plus: f64,
}

impl ConsistencyReport {
    pub fn new(tau: f64, n: usize) -> Self {
        ConsistencyReport {
            tau,
            n,
            tau_plus: tau.clamp(0.0, 1.0),
        }
    }
}

fn check_scores(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            found: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score list"));
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite scores")
}

/// Sum of `t(t-1)/2` over runs of equal values in a sorted sequence.
fn tied_pairs<T>(items: &[T], same: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in items.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that counts strict inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-a with `sign(0) = 0`, in O(n log n).
///
/// Tied pairs contribute nothing to the numerator; the denominator is always
/// `n(n-1)/2`.
pub fn kendall_tau(prev: &[f64], new: &[f64]) -> Result<ConsistencyReport> {
    check_scores(prev, new)?;
    let n = prev.len();
    let mut pairs: Vec<(f64, f64)> = prev.iter().copied().zip(new.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pairs(&pairs, |a, b| a.0 == b.0);
    let n3 = tied_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = sort_counting_swaps(&mut ys, &mut Vec::with_capacity(n));
    let n2 = tied_pairs(&ys, |a, b| a == b);

    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(ConsistencyReport::new(s as f64 / n0 as f64, n))
}

/// Mean of [`kendall_tau`] over all unordered pairs of score lists.
pub fn mean_pairwise_tau(lists: &[Vec<f64>]) -> Result<ConsistencyReport> {
    if lists.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            found: lists.len(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..lists.len() {
        for j in i + 1..lists.len() {
            sum += kendall_tau(&lists[i], &lists[j])?.tau;
            count += 1;
        }
    }
    Ok(ConsistencyReport::new(sum / count as f64, lists[0].len()))
}

/// Agreement of an ensemble on a fixed probe set: the mean pairwise tau of
/// the members' predicted aggregates.
pub fn ensemble_tau(members: &[&dyn Predictor], probe: &[DesignMatrix]) -> Result<ConsistencyReport> {
    let lists = members
        .iter()
        .map(|m| probe.iter().map(|d| m.predict_aggregate(d)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    mean_pairwise_tau(&lists)
}

/// How many of the `total` picks follow the predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub total: usize,
    pub predictor: usize,
    pub random: usize,
}

impl SelectionPlan {
    /// `R_p = floor(clamp(tau, 0, 1) * R + 0.5)`, `R_r = R - R_p`.
    pub fn from_tau(tau: f64, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Config("selection size must be at least 1".into()));
        }
        if tau.is_nan() {
            return Err(Error::NonFinite("tau"));
        }
        let predictor = ((tau.clamp(0.0, 1.0) * total as f64 + 0.5).floor() as usize).min(total);
        Ok(SelectionPlan {
            total,
            predictor,
            random: total - predictor,
        })
    }
}

/// A candidate with its predicted aggregate.
#[derive(Clone, Debug)]
pub struct Scored {
    pub candidate: Candidate,
    pub score: f64,
}

/// Chooses `plan.total` distinct, unevaluated designs: the `plan.predictor`
/// best-scored entries of `ranked`, then `plan.random` draws from `sample`.
///
/// `ranked` is sorted here (descending, stable), so callers may pass it in
/// any order. `sample` is retried until it yields a fresh design, at most
/// `max_attempts` times per pick.
pub fn mixed_select(
    ranked: &[Scored],
    plan: &SelectionPlan,
    dataset: &Dataset,
    rng: &mut Rng,
    max_attempts: usize,
    mut sample: impl FnMut(&mut Rng) -> Result<Candidate>,
) -> Result<Vec<Candidate>> {
    let mut order: Vec<&Scored> = ranked.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut chosen: Vec<Candidate> = Vec::with_capacity(plan.total);
    let mut seen: HashSet<DesignMatrix> = HashSet::new();
    for s in order {
        if chosen.len() == plan.predictor {
            break;
        }
        let d = &s.candidate.design;
        if !dataset.contains(d) && seen.insert(d.clone()) {
            chosen.push(s.candidate.clone());
        }
    }
    if chosen.len() < plan.predictor {
        return Err(Error::PoolExhausted {
            requested: plan.predictor,
            available: chosen.len(),
        });
    }
    for _ in 0..plan.random {
        let mut found = false;
        for _ in 0..max_attempts {
            let c = sample(rng)?;
            if !dataset.contains(&c.design) && seen.insert(c.design.clone()) {
                chosen.push(c);
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::PoolExhausted {
                requested: plan.total,
                available: chosen.len(),
            });
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Dims;
    use crate::oracle::{evaluate, BudgetLedger, CountOnesOracle};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn sign(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    fn brute_tau(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += sign(a[i] - a[j]) * sign(b[i] - b[j]);
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    }

    #[test]
    fn worked_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(kendall_tau(&x, &x).unwrap().tau, 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0], &[2.0, 1.0]).unwrap().tau, -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t.tau - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.n, 3);
        let t = kendall_tau(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(t.tau_plus, 0.0);
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap().tau, 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            kendall_tau(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(matches!(kendall_tau(&[1.0], &[1.0]), Err(Error::TooFewItems { .. })));
        assert!(kendall_tau(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matches_pair_counting_with_ties() {
        let mut rng = rng_from_seed(99);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=200);
            let levels = rng.gen_range(1..=n + 1);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
            assert_eq!(kendall_tau(&a, &b).unwrap().tau, brute_tau(&a, &b));
        }
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_maps(
            a in prop::collection::vec(-50i32..50, 2..60),
            seed in any::<u64>(),
        ) {
            let mut rng = rng_from_seed(seed);
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = a.iter().map(|_| rng.gen_range(-5..5) as f64).collect();
            let base = kendall_tau(&a, &b).unwrap().tau;
            let a2: Vec<f64> = a.iter().map(|x| (x / 10.0).exp() * 3.0 + 1.0).collect();
            let b2: Vec<f64> = b.iter().map(|x| x * x * x - 7.0).collect();
            prop_assert_eq!(kendall_tau(&a2, &b2).unwrap().tau, base);
        }
    }

    #[test]
    fn pairwise_mean_matches_nested_loops() {
        let mut rng = rng_from_seed(3);
        let lists: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..30).map(|_| rng.gen_range(0..8) as f64).collect())
            .collect();
        let mut sum = 0.0;
        let mut count = 0.0;
        for i in 0..lists.len() {
            for j in 0..lists.len() {
                if i < j {
                    sum += brute_tau(&lists[i], &lists[j]);
                    count += 1.0;
                }
            }
        }
        let got = mean_pairwise_tau(&lists).unwrap();
        assert!((got.tau - sum / count).abs() < 1e-12);
        assert!(mean_pairwise_tau(&lists[..1]).is_err());
    }

    #[test]
    fn plan_counts() {
        let p = SelectionPlan::from_tau(0.5, 10).unwrap();
        assert_eq!((p.predictor, p.random), (5, 5));
        let p = SelectionPlan::from_tau(1.0, 10).unwrap();
        assert_eq!((p.predictor, p.random), (10, 0));
        let p = SelectionPlan::from_tau(-0.3, 10).unwrap();
        assert_eq!((p.predictor, p.random), (0, 10));
        assert_eq!(SelectionPlan::from_tau(0.25, 10).unwrap().predictor, 3);
        assert_eq!(SelectionPlan::from_tau(0.24, 10).unwrap().predictor, 2);
        assert!(SelectionPlan::from_tau(0.5, 0).is_err());
        for r in 1..30 {
            for k in 0..=100 {
                let tau = k as f64 / 100.0;
                let p = SelectionPlan::from_tau(tau, r).unwrap();
                assert_eq!(p.predictor + p.random, r);
                if tau >= 1.0 / r as f64 {
                    assert!(p.predictor >= 1);
                }
            }
        }
    }

    fn scored(dims: Dims, rng: &mut crate::seed::Rng, n: usize) -> Vec<Scored> {
        (0..n)
            .map(|_| {
                let d = DesignMatrix::random(dims, rng);
                Scored {
                    score: d.count_ones() as f64,
                    candidate: Candidate::from_design(d),
                }
            })
            .collect()
    }

    #[test]
    fn selection_is_distinct_unevaluated_and_complete() {
        let dims = Dims::new(4, 4, 1);
        let oracle = CountOnesOracle::new(dims);
        let mut rng = rng_from_seed(5);
        let ranked = scored(dims, &mut rng, 40);
        let ledger = BudgetLedger::new(100);
        let mut data = Dataset::new();
        for s in ranked.iter().take(10) {
            evaluate(&oracle, s.candidate.clone(), &ledger, &mut data, 0).unwrap();
        }
        for tau in [0.0, 0.3, 0.7, 1.0] {
            let plan = SelectionPlan::from_tau(tau, 10).unwrap();
            let picks = mixed_select(&ranked, &plan, &data, &mut rng, 100, |r| {
                Ok(Candidate::from_design(DesignMatrix::random(dims, r)))
            })
            .unwrap();
            assert_eq!(picks.len(), 10);
            let set: HashSet<_> = picks.iter().map(|c| c.design.clone()).collect();
            assert_eq!(set.len(), 10);
            assert!(picks.iter().all(|c| !data.contains(&c.design)));
            if plan.predictor >= 1 {
                let top = ranked
                    .iter()
                    .filter(|s| !data.contains(&s.candidate.design))
                    .max_by(|a, b| a.score.total_cmp(&b.score).then(std::cmp::Ordering::Greater))
                    .unwrap();
                assert!(set.contains(&top.candidate.design));
            }
        }
    }

    #[test]
    fn full_trust_takes_predictor_order() {
        let dims = Dims::new(3, 3, 1);
        let mut rng = rng_from_seed(8);
        let ranked = scored(dims, &mut rng, 30);
        let plan = SelectionPlan::from_tau(1.0, 5).unwrap();
        let picks = mixed_select(&ranked, &plan, &Dataset::new(), &mut rng, 10, |_| {
            unreachable!("no random picks at tau = 1")
        })
        .unwrap();
        let mut sorted = ranked.clone();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut expect = Vec::new();
        for s in sorted {
            if !expect.contains(&s.candidate.design) {
                expect.push(s.candidate.design);
            }
        }
        let got: Vec<_> = picks.into_iter().map(|c| c.design).collect();
        assert_eq!(got, expect[..5]);
    }

    #[test]
    fn exhausted_pools_are_reported() {
        let dims = Dims::new(1, 1, 1);
        let mut rng = rng_from_seed(1);
        let plan = SelectionPlan::from_tau(0.0, 3).unwrap();
        let err = mixed_select(&[], &plan, &Dataset::new(), &mut rng, 50, |r| {
            Ok(Candidate::from_design(DesignMatrix::random(dims, r)))
        })
        .unwrap_err();
        assert!(matches!(err, Error::PoolExhausted { available: 2, .. }));
        let plan = SelectionPlan::from_tau(1.0, 3).unwrap();
        assert!(mixed_select(&[], &plan, &Dataset::new(), &mut rng, 50, |_| unreachable!()).is_err());
    }
}
