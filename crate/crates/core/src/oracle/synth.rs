//! Deterministic synthetic simulators.
//!
//! The response curve over a normalised frequency axis `u in [0, 1]` is
//!
//! ```text
//! r(u) = sum_f w_f(u) * phi_f(x) + w_0(u)
//! ```
//!
//! where `phi` are the multi-scale block means of [`crate::features`] and
//! every weight curve is a sum of one to five seeded sinusoids, scaled per
//! feature scale. Criteria are extrema of `sign * r(u)` over frequency bands.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::criteria::CriterionVector;
use super::Oracle;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, Scale};
use crate::layout::{DesignMatrix, Dims};
use crate::seed::derive_rng;

/// Number of frequency samples on the unit band.
pub const FREQ_POINTS: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// `S_k = sense_{u in [lo, hi]} sign * r(u)`, with `lo`/`hi` on the unit axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub sense: Sense,
    pub sign: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleAmplitudes {
    pub full: f64,
    pub halves: f64,
    pub quarters: f64,
    pub cells: f64,
}

impl ScaleAmplitudes {
    pub fn of(&self, scale: Scale) -> f64 {
        match scale {
            Scale::Full => self.full,
            Scale::Halves => self.halves,
            Scale::Quarters => self.quarters,
            Scale::Cells => self.cells,
        }
    }
}

impl Default for ScaleAmplitudes {
    fn default() -> Self {
        ScaleAmplitudes {
            full: 2.0,
            halves: 1.0,
            quarters: 0.5,
            cells: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub family: String,
    pub dims: Dims,
    pub bands: Vec<Band>,
    pub seed: u64,
    #[serde(default)]
    pub amplitudes: ScaleAmplitudes,
    /// Constant level of the base curve `w_0`.
    #[serde(default)]
    pub baseline: f64,
}

/// Maps physical bands `(lo, hi)` linearly onto `[0, 1]`, spanning the
/// union of all bands.
pub fn normalise_bands(physical: &[(f64, f64, Sense, f64)]) -> Vec<Band> {
    let lo = physical.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let hi = physical.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    physical
        .iter()
        .map(|&(a, b, sense, sign)| Band {
            lo: (a - lo) / (hi - lo),
            hi: (b - lo) / (hi - lo),
            sense,
            sign,
        })
        .collect()
}

impl OracleSpec {
    /// The shipped benchmarks.
    pub fn named(id: &str) -> Option<Self> {
        match id {
            // two layers; maximise the in-band minimum of -S over the stop
            // band and the in-band maximum of -S over the pass band
            "synth-dualfss" => Some(OracleSpec {
                family: id.into(),
                dims: Dims::new(12, 12, 2),
                bands: normalise_bands(&[
                    (31.5, 34.5, Sense::Min, -1.0),
                    (10.5, 15.5, Sense::Max, -1.0),
                ]),
                seed: 0x0D0A_1F55,
                amplitudes: ScaleAmplitudes::default(),
                baseline: -8.0,
            }),
            // worst-case gain over two bands
            "synth-hga" => Some(OracleSpec {
                family: id.into(),
                dims: Dims::new(15, 20, 1),
                bands: normalise_bands(&[
                    (2.45, 2.55, Sense::Min, 1.0),
                    (5.0, 6.0, Sense::Min, 1.0),
                ]),
                seed: 0x0000_46A1,
                amplitudes: ScaleAmplitudes::default(),
                baseline: 2.0,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.bands.is_empty() {
            return Err(Error::Config("oracle spec needs at least one band".into()));
        }
        for b in &self.bands {
            if !(0.0..=1.0).contains(&b.lo) || !(0.0..=1.0).contains(&b.hi) || b.lo > b.hi {
                return Err(Error::Config(format!("band [{}, {}] outside [0, 1]", b.lo, b.hi)));
            }
        }
        Ok(())
    }
}

pub fn frequency(k: usize) -> f64 {
    k as f64 / (FREQ_POINTS - 1) as f64
}

fn band_points(band: &Band) -> Vec<usize> {
    const EPS: f64 = 1e-9;
    (0..FREQ_POINTS)
        .filter(|&k| {
            let u = frequency(k);
            u >= band.lo - EPS && u <= band.hi + EPS
        })
        .collect()
}

fn sinusoid_curve(master: u64, label: &str, index: u64, amplitude: f64, offset: f64) -> Vec<f64> {
    let mut rng = derive_rng(master, label, index);
    let terms = rng.gen_range(1..=5);
    let params: Vec<(f64, f64, f64)> = (0..terms)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.25..2.5),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let norm = (terms as f64).sqrt();
    (0..FREQ_POINTS)
        .map(|k| {
            let u = frequency(k);
            let s: f64 = params
                .iter()
                .map(|&(a, nu, phase)| a * (2.0 * PI * nu * u + phase).sin())
                .sum();
            offset + amplitude * s / norm
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SynthOracle {
    spec: OracleSpec,
    features: FeatureMap,
    // FREQ_POINTS rows of feature weights, row-major
    weights: Vec<f64>,
    base: Vec<f64>,
    bands: Vec<Vec<usize>>,
}

impl SynthOracle {
    pub fn new(spec: OracleSpec) -> Result<Self> {
        spec.validate()?;
        let features = FeatureMap::new(spec.dims)?;
        let nf = features.len();
        let mut weights = vec![0.0; FREQ_POINTS * nf];
        for f in 0..nf {
            let amp = spec.amplitudes.of(features.info(f).scale);
            let curve = sinusoid_curve(spec.seed, "weight-curve", f as u64, amp, 0.0);
            for (k, w) in curve.into_iter().enumerate() {
                weights[k * nf + f] = w;
            }
        }
        let base = sinusoid_curve(spec.seed, "base-curve", 0, 0.5, spec.baseline);
        let bands: Vec<Vec<usize>> = spec.bands.iter().map(band_points).collect();
        if let Some(i) = bands.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("band {i} contains no frequency samples")));
        }
        Ok(SynthOracle {
            spec,
            features,
            weights,
            base,
            bands,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    /// Weight of feature `f` at frequency sample `k`.
    pub fn weight(&self, k: usize, f: usize) -> f64 {
        self.weights[k * self.features.len() + f]
    }

    pub fn base_curve(&self) -> &[f64] {
        &self.base
    }

    /// Frequency sample indices inside each band.
    pub fn band_points(&self) -> &[Vec<usize>] {
        &self.bands
    }

    /// Response curve sampled at [`FREQ_POINTS`] frequencies.
    pub fn synth_response(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        let phi = self.features.compute(design)?;
        let nf = phi.len();
        Ok((0..FREQ_POINTS)
            .map(|k| {
                let row = &self.weights[k * nf..(k + 1) * nf];
                self.base[k] + row.iter().zip(&phi).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }

    /// Band extrema of a response curve.
    pub fn criteria_from_response(&self, response: &[f64]) -> Result<CriterionVector> {
        let values = self
            .spec
            .bands
            .iter()
            .zip(&self.bands)
            .map(|(band, points)| {
                let vals = points.iter().map(|&k| band.sign * response[k]);
                match band.sense {
                    Sense::Min => vals.fold(f64::INFINITY, f64::min),
                    Sense::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        CriterionVector::new(values)
    }

    pub fn synth_criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        let response = self.synth_response(design)?;
        self.criteria_from_response(&response)
    }
}

impl Oracle for SynthOracle {
    fn id(&self) -> &str {
        &self.spec.family
    }
    fn dims(&self) -> Dims {
        self.spec.dims
    }
    fn num_criteria(&self) -> usize {
        self.spec.bands.len()
    }
    fn criteria(&self, design: &DesignMatrix) -> Result<CriterionVector> {
        self.synth_criteria(design)
    }
}
