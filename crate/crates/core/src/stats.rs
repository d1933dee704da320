//! Summary statistics and the exact one-sided Wilcoxon signed-rank test used
//! for paired method comparisons.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() == 1 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Non-zero differences that entered the test.
    pub n: usize,
    /// Exact `P(W+ >= observed)` under the null of symmetric differences.
    pub p_value: f64,
}

/// One-sided exact signed-rank test of `H1: x > y` on paired samples.
///
/// Zero differences are dropped; tied magnitudes get average ranks. The null
/// distribution is enumerated exactly by dynamic programming over doubled
/// ranks, so ties are handled without a normal approximation.
pub fn wilcoxon_greater(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let mut d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired samples"));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n: 0,
            p_value: 1.0,
        });
    }
    d.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // doubled average ranks are integers
    let mut ranks2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        for r in &mut ranks2[i..=j] {
            *r = i + j + 2;
        }
        i = j + 1;
    }
    let observed: usize = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    let total: usize = ranks2.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    for &r in &ranks2 {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let tail: f64 = ways[observed..].iter().sum();
    Ok(WilcoxonResult {
        w_plus: observed as f64 / 2.0,
        n,
        p_value: tail / 2f64.powi(n as i32),
    })
}
