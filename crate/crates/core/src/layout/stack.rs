use rand::Rng as _;

use super::design::{DesignMatrix, Dims};
use super::tree::{grow_random, QuadtreeLayout};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// One quadtree per layer, all on the same grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutStack {
    layers: Vec<QuadtreeLayout>,
}

impl LayoutStack {
    pub fn new(layers: Vec<QuadtreeLayout>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("a layout stack needs at least one layer".into()))?;
        let (rows, cols) = (first.rows(), first.cols());
        if let Some(bad) = layers.iter().find(|l| l.rows() != rows || l.cols() != cols) {
            return Err(Error::dims(
                format!("{rows}x{cols}"),
                format!("{}x{}", bad.rows(), bad.cols()),
            ));
        }
        Ok(LayoutStack { layers })
    }

    pub fn single(layout: QuadtreeLayout) -> Self {
        LayoutStack {
            layers: vec![layout],
        }
    }

    /// Root-only layers with uniformly drawn states.
    pub fn random_roots(dims: Dims, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let layers = (0..dims.layers)
            .map(|_| QuadtreeLayout::random_root(dims.rows, dims.cols, rng))
            .collect::<Result<_>>()?;
        Ok(LayoutStack { layers })
    }

    /// Each layer grown independently by [`grow_random`] up to `cap` leaves.
    pub fn grow_random(dims: Dims, cap: usize, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let layers = (0..dims.layers)
            .map(|_| grow_random(dims.rows, dims.cols, cap, rng))
            .collect::<Result<_>>()?;
        Ok(LayoutStack { layers })
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.layers[0].rows(), self.layers[0].cols(), self.layers.len())
    }

    pub fn layers(&self) -> &[QuadtreeLayout] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &QuadtreeLayout {
        &self.layers[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut QuadtreeLayout {
        &mut self.layers[k]
    }

    /// Largest per-layer leaf count.
    pub fn max_leaf_count(&self) -> usize {
        self.layers.iter().map(QuadtreeLayout::leaf_count).max().unwrap_or(0)
    }

    pub fn total_leaf_count(&self) -> usize {
        self.layers.iter().map(QuadtreeLayout::leaf_count).sum()
    }

    pub fn reconstruct(&self) -> DesignMatrix {
        let dims = self.dims();
        let mut design = DesignMatrix::zeros(dims);
        let n = dims.layer_cells();
        for (layer, chunk) in self.layers.iter().zip(design.cells_mut().chunks_mut(n)) {
            layer.fill_layer(chunk);
        }
        design
    }

    /// Picks a layer uniformly.
    pub fn random_layer(&self, rng: &mut Rng) -> usize {
        if self.layers.len() == 1 {
            0
        } else {
            rng.gen_range(0..self.layers.len())
        }
    }

    pub fn with_layer(&self, k: usize, layer: QuadtreeLayout) -> Result<Self> {
        let mut layers = self.layers.clone();
        if layer.rows() != layers[k].rows() || layer.cols() != layers[k].cols() {
            return Err(Error::dims(layers[k].dims(), layer.dims()));
        }
        layers[k] = layer;
        Ok(LayoutStack { layers })
    }
}
