use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Grid dimensions of a (possibly multi-layer) design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
    pub layers: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize, layers: usize) -> Self {
        Dims { rows, cols, layers }
    }

    pub fn layer_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols * self.layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.layers == 0 {
            return Err(Error::Config(format!("empty grid {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.layers)
    }
}

/// Binary design matrix, stored layer-major then row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DesignMatrix {
    dims: Dims,
    cells: Vec<u8>,
}

impl DesignMatrix {
    pub fn zeros(dims: Dims) -> Self {
        DesignMatrix {
            dims,
            cells: vec![0; dims.cells()],
        }
    }

    pub fn from_cells(dims: Dims, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != dims.cells() {
            return Err(Error::dims(dims.cells(), cells.len()));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::Config("design cells must be 0 or 1".into()));
        }
        Ok(DesignMatrix { dims, cells })
    }

    /// Every cell an independent fair coin.
    pub fn random(dims: Dims, rng: &mut Rng) -> Self {
        let mut cells = Vec::with_capacity(dims.cells());
        while cells.len() < dims.cells() {
            let mut word: u64 = rng.gen();
            for _ in 0..64.min(dims.cells() - cells.len()) {
                cells.push((word & 1) as u8);
                word >>= 1;
            }
        }
        DesignMatrix { dims, cells }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [u8] {
        &mut self.cells
    }

    pub fn layer(&self, layer: usize) -> &[u8] {
        let n = self.dims.layer_cells();
        &self.cells[layer * n..(layer + 1) * n]
    }

    pub fn get(&self, layer: usize, i: usize, j: usize) -> u8 {
        self.cells[self.index(layer, i, j)]
    }

    pub fn set(&mut self, layer: usize, i: usize, j: usize, value: u8) {
        let idx = self.index(layer, i, j);
        self.cells[idx] = value & 1;
    }

    pub fn flip(&mut self, layer: usize, i: usize, j: usize) {
        let idx = self.index(layer, i, j);
        self.cells[idx] ^= 1;
    }

    fn index(&self, layer: usize, i: usize, j: usize) -> usize {
        layer * self.dims.layer_cells() + i * self.dims.cols + j
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Compact text form: one `0`/`1` character per cell, layers joined by `/`.
    pub fn to_bitstring(&self) -> String {
        let n = self.dims.layer_cells();
        let mut out = String::with_capacity(self.cells.len() + self.dims.layers);
        for (l, chunk) in self.cells.chunks(n).enumerate() {
            if l > 0 {
                out.push('/');
            }
            out.extend(chunk.iter().map(|&c| if c == 1 { '1' } else { '0' }));
        }
        out
    }

    pub fn from_bitstring(dims: Dims, text: &str) -> Result<Self> {
        let mut cells = Vec::with_capacity(dims.cells());
        let mut layers = 0;
        for (offset, part) in text.split('/').enumerate() {
            layers += 1;
            if part.len() != dims.layer_cells() {
                return Err(Error::Parse {
                    offset,
                    message: format!(
                        "layer {} has {} cells, expected {}",
                        offset,
                        part.len(),
                        dims.layer_cells()
                    ),
                });
            }
            for (k, ch) in part.chars().enumerate() {
                match ch {
                    '0' => cells.push(0),
                    '1' => cells.push(1),
                    other => {
                        return Err(Error::Parse {
                            offset: k,
                            message: format!("unexpected character {other:?} in design"),
                        })
                    }
                }
            }
        }
        if layers != dims.layers {
            return Err(Error::dims(dims.layers, layers));
        }
        Ok(DesignMatrix { dims, cells })
    }

    /// Writes one dense CSV per layer to `{prefix}_layer{k}.csv` and returns
    /// the written paths.
    pub fn write_csv(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::with_capacity(self.dims.layers);
        for layer in 0..self.dims.layers {
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("_layer{layer}.csv"));
            let path = PathBuf::from(name);
            let mut text = String::new();
            for i in 0..self.dims.rows {
                let row: Vec<&str> = (0..self.dims.cols)
                    .map(|j| if self.get(layer, i, j) == 1 { "1" } else { "0" })
                    .collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            fs::write(&path, text)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn bitstring_round_trip() {
        let dims = Dims::new(3, 4, 2);
        let design = DesignMatrix::random(dims, &mut rng_from_seed(5));
        let text = design.to_bitstring();
        assert_eq!(text.len(), 12 * 2 + 1);
        assert_eq!(DesignMatrix::from_bitstring(dims, &text).unwrap(), design);
    }

    #[test]
    fn bad_bitstring_is_rejected() {
        let dims = Dims::new(2, 2, 1);
        assert!(DesignMatrix::from_bitstring(dims, "01").is_err());
        assert!(DesignMatrix::from_bitstring(dims, "01x1").is_err());
        assert!(DesignMatrix::from_bitstring(dims, "0101/0101").is_err());
    }

    #[test]
    fn csv_export_writes_one_file_per_layer() {
        let dir = tempfile::tempdir().unwrap();
        let mut design = DesignMatrix::zeros(Dims::new(2, 3, 2));
        design.set(1, 1, 2, 1);
        let paths = design.write_csv(&dir.path().join("best")).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[1].ends_with("best_layer1.csv"));
        assert_eq!(fs::read_to_string(&paths[0]).unwrap(), "0,0,0\n0,0,0\n");
        assert_eq!(fs::read_to_string(&paths[1]).unwrap(), "0,0,0\n0,0,1\n");
    }
}
