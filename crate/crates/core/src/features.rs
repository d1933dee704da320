//! Multi-scale mean-pooled block features of a design.
//!
//! Each layer contributes four scales: the whole grid, its midpoint halves,
//! its quarters, and the individual cells. Coarse blocks come from applying
//! the quadtree midpoint split uniformly, so a uniform depth-`d` quadtree
//! lines up exactly with the scale-`d` blocks. A block that is a single
//! cell is carried unchanged to the next scale.
//!
//! Feature order is layer-major; inside a layer: full, halves, quarters,
//! then cells row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{split_region, DesignMatrix, Dims, Region};

pub const FEATURE_DEF_ID: &str = "multiscale-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    Full,
    Halves,
    Quarters,
    Cells,
}

impl Scale {
    pub const ALL: [Scale; 4] = [Scale::Full, Scale::Halves, Scale::Quarters, Scale::Cells];
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureInfo {
    pub layer: usize,
    pub scale: Scale,
    pub region: Region,
}

#[derive(Clone, Debug)]
pub struct FeatureMap {
    dims: Dims,
    // coarse blocks (full, halves, quarters) of one layer
    coarse: Vec<(Scale, Region)>,
    // for every pixel of a layer, the coarse block index at each of the 3 scales
    pixel_blocks: Vec<[u32; 3]>,
    coarse_sizes: Vec<f64>,
}

impl FeatureMap {
    pub fn new(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let mut coarse = Vec::new();
        let mut level = vec![Region::full(dims.rows, dims.cols)];
        for scale in [Scale::Full, Scale::Halves, Scale::Quarters] {
            coarse.extend(level.iter().map(|&r| (scale, r)));
            level = level
                .iter()
                .flat_map(|&r| split_region(r).unwrap_or_else(|_| vec![r]))
                .collect();
        }
        let mut pixel_blocks = vec![[0u32; 3]; dims.layer_cells()];
        for (b, (scale, region)) in coarse.iter().enumerate() {
            let s = match scale {
                Scale::Full => 0,
                Scale::Halves => 1,
                _ => 2,
            };
            for i in region.r_start..=region.r_end {
                for j in region.c_start..=region.c_end {
                    pixel_blocks[i * dims.cols + j][s] = b as u32;
                }
            }
        }
        let coarse_sizes = coarse.iter().map(|(_, r)| r.cells() as f64).collect();
        Ok(FeatureMap {
            dims,
            coarse,
            pixel_blocks,
            coarse_sizes,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn per_layer(&self) -> usize {
        self.coarse.len() + self.dims.layer_cells()
    }

    pub fn len(&self) -> usize {
        self.per_layer() * self.dims.layers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn info(&self, feature: usize) -> FeatureInfo {
        let per = self.per_layer();
        let layer = feature / per;
        let local = feature % per;
        if local < self.coarse.len() {
            let (scale, region) = self.coarse[local];
            FeatureInfo {
                layer,
                scale,
                region,
            }
        } else {
            let cell = local - self.coarse.len();
            let (i, j) = (cell / self.dims.cols, cell % self.dims.cols);
            FeatureInfo {
                layer,
                scale: Scale::Cells,
                region: Region::new(i, i, j, j),
            }
        }
    }

    fn check(&self, design: &DesignMatrix) -> Result<()> {
        if design.dims() != self.dims {
            return Err(Error::dims(self.dims, design.dims()));
        }
        Ok(())
    }

    pub fn compute(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.compute_into(design, &mut out)?;
        Ok(out)
    }

    pub fn compute_into(&self, design: &DesignMatrix, out: &mut [f64]) -> Result<()> {
        self.check(design)?;
        let per = self.per_layer();
        let nc = self.coarse.len();
        let mut counts = vec![0u32; nc];
        for layer in 0..self.dims.layers {
            counts.iter_mut().for_each(|c| *c = 0);
            let cells = design.layer(layer);
            let base = layer * per;
            for (p, &x) in cells.iter().enumerate() {
                if x == 1 {
                    for &b in &self.pixel_blocks[p] {
                        counts[b as usize] += 1;
                    }
                }
                out[base + nc + p] = x as f64;
            }
            for b in 0..nc {
                out[base + b] = counts[b] as f64 / self.coarse_sizes[b];
            }
        }
        Ok(())
    }

    /// Folds a feature-space weight vector into per-pixel weights, so that
    /// `w . features(x) == pixel_weights(w) . x` for every design `x`.
    pub fn pixel_weights(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.len());
        let per = self.per_layer();
        let nc = self.coarse.len();
        let mut out = vec![0.0; self.dims.cells()];
        for layer in 0..self.dims.layers {
            let w = &weights[layer * per..(layer + 1) * per];
            let dst = &mut out[layer * self.dims.layer_cells()..(layer + 1) * self.dims.layer_cells()];
            for (p, slot) in dst.iter_mut().enumerate() {
                let mut acc = w[nc + p];
                for &b in &self.pixel_blocks[p] {
                    acc += w[b as usize] / self.coarse_sizes[b as usize];
                }
                *slot = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn feature_counts() {
        assert_eq!(FeatureMap::new(Dims::new(15, 20, 1)).unwrap().len(), 1 + 4 + 16 + 300);
        assert_eq!(FeatureMap::new(Dims::new(12, 12, 2)).unwrap().len(), 2 * (21 + 144));
        // 3x3: halves are 2+1 rows/cols, quarters cannot split the unit blocks
        let small = FeatureMap::new(Dims::new(3, 3, 1)).unwrap();
        assert_eq!(small.len(), 1 + 4 + 9 + 9);
    }

    #[test]
    fn features_are_block_means() {
        let dims = Dims::new(15, 20, 2);
        let map = FeatureMap::new(dims).unwrap();
        let design = DesignMatrix::random(dims, &mut rng_from_seed(1));
        let f = map.compute(&design).unwrap();
        for (k, &value) in f.iter().enumerate() {
            let info = map.info(k);
            let r = info.region;
            let mut sum = 0.0;
            for i in r.r_start..=r.r_end {
                for j in r.c_start..=r.c_end {
                    sum += design.get(info.layer, i, j) as f64;
                }
            }
            assert!((value - sum / r.cells() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn pixel_weights_fold_exactly() {
        let dims = Dims::new(12, 12, 2);
        let map = FeatureMap::new(dims).unwrap();
        let mut rng = rng_from_seed(2);
        let w: Vec<f64> = (0..map.len()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let pw = map.pixel_weights(&w);
        for _ in 0..10 {
            let design = DesignMatrix::random(dims, &mut rng);
            let f = map.compute(&design).unwrap();
            let a: f64 = f.iter().zip(&w).map(|(x, y)| x * y).sum();
            let b: f64 = design.cells().iter().zip(&pw).map(|(&x, y)| x as f64 * y).sum();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn flipping_a_quadrant_changes_its_quarter_feature() {
        let dims = Dims::new(16, 16, 1);
        let map = FeatureMap::new(dims).unwrap();
        let base = DesignMatrix::zeros(dims);
        let mut flipped = base.clone();
        for i in 0..8 {
            for j in 0..8 {
                flipped.set(0, i, j, 1);
            }
        }
        let fa = map.compute(&base).unwrap();
        let fb = map.compute(&flipped).unwrap();
        let changed: Vec<usize> = (0..fa.len()).filter(|&k| fa[k] != fb[k]).collect();
        // the upper-left half block changes; the other halves do not
        let halves: Vec<usize> = changed.iter().copied().filter(|&k| map.info(k).scale == Scale::Halves).collect();
        assert_eq!(halves.len(), 1);
        assert_eq!(map.info(halves[0]).region, Region::new(0, 7, 0, 7));

        // one pixel changes exactly one block per coarse scale plus its cell
        let mut pixel = base.clone();
        pixel.flip(0, 9, 3);
        let fp = map.compute(&pixel).unwrap();
        let diff: Vec<usize> = (0..fa.len()).filter(|&k| fa[k] != fp[k]).collect();
        assert_eq!(diff.len(), 4);
        for k in diff {
            assert!(map.info(k).region.contains(9, 3));
        }
    }
}
