use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive rectangle of grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub r_start: usize,
    pub r_end: usize,
    pub c_start: usize,
    pub c_end: usize,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}..={}]x[{}..={}]",
            self.r_start, self.r_end, self.c_start, self.c_end
        )
    }
}

/// How an internal node divides its region. Positions are absolute grid
/// indices of the last row (column) belonging to the upper (left) part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    /// Four quadrants in the order upper-left, upper-right, lower-left, lower-right.
    Quad { row: usize, col: usize },
    /// Upper and lower halves.
    Rows { row: usize },
    /// Left and right halves.
    Cols { col: usize },
}

impl Split {
    pub fn arity(&self) -> usize {
        match self {
            Split::Quad { .. } => 4,
            Split::Rows { .. } | Split::Cols { .. } => 2,
        }
    }
}

impl Region {
    pub fn new(r_start: usize, r_end: usize, c_start: usize, c_end: usize) -> Self {
        debug_assert!(r_start <= r_end && c_start <= c_end);
        Region {
            r_start,
            r_end,
            c_start,
            c_end,
        }
    }

    /// Region covering a whole `rows x cols` grid.
    pub fn full(rows: usize, cols: usize) -> Self {
        Region::new(0, rows - 1, 0, cols - 1)
    }

    pub fn rows(&self) -> usize {
        self.r_end - self.r_start + 1
    }

    pub fn cols(&self) -> usize {
        self.c_end - self.c_start + 1
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.r_start <= i && i <= self.r_end && self.c_start <= j && j <= self.c_end
    }

    pub fn is_unit(&self) -> bool {
        self.r_start == self.r_end && self.c_start == self.c_end
    }

    /// Floor-midpoint split. Single-row regions split into two column halves
    /// and single-column regions into two row halves.
    pub fn midpoint_split(&self) -> Result<Split> {
        let r_mid = (self.r_start + self.r_end) / 2;
        let c_mid = (self.c_start + self.c_end) / 2;
        match (self.rows() > 1, self.cols() > 1) {
            (true, true) => Ok(Split::Quad {
                row: r_mid,
                col: c_mid,
            }),
            (true, false) => Ok(Split::Rows { row: r_mid }),
            (false, true) => Ok(Split::Cols { col: c_mid }),
            (false, false) => Err(Error::DegenerateRegion(*self)),
        }
    }

    /// Whether `split` yields non-empty children inside this region.
    pub fn admits(&self, split: Split) -> bool {
        let row_ok = |row: usize| self.r_start <= row && row < self.r_end;
        let col_ok = |col: usize| self.c_start <= col && col < self.c_end;
        match split {
            Split::Quad { row, col } => row_ok(row) && col_ok(col),
            Split::Rows { row } => row_ok(row),
            Split::Cols { col } => col_ok(col),
        }
    }

    /// Children of this region under `split`, in canonical order. Returns the
    /// child array and how many entries of it are used.
    pub(crate) fn child_regions(&self, split: Split) -> ([Region; 4], usize) {
        debug_assert!(self.admits(split));
        let mut out = [*self; 4];
        match split {
            Split::Quad { row, col } => {
                out[0] = Region::new(self.r_start, row, self.c_start, col);
                out[1] = Region::new(self.r_start, row, col + 1, self.c_end);
                out[2] = Region::new(row + 1, self.r_end, self.c_start, col);
                out[3] = Region::new(row + 1, self.r_end, col + 1, self.c_end);
                (out, 4)
            }
            Split::Rows { row } => {
                out[0] = Region::new(self.r_start, row, self.c_start, self.c_end);
                out[1] = Region::new(row + 1, self.r_end, self.c_start, self.c_end);
                (out, 2)
            }
            Split::Cols { col } => {
                out[0] = Region::new(self.r_start, self.r_end, self.c_start, col);
                out[1] = Region::new(self.r_start, self.r_end, col + 1, self.c_end);
                (out, 2)
            }
        }
    }

    /// Children under an explicit split, validated against this region.
    pub fn split_with(&self, split: Split) -> Result<Vec<Region>> {
        if !self.admits(split) {
            return Err(Error::Config(format!(
                "split {split:?} does not fit region {self}"
            )));
        }
        let (children, n) = self.child_regions(split);
        Ok(children[..n].to_vec())
    }
}

/// Splits a region at its floor midpoints into 2 or 4 children.
pub fn split_region(region: Region) -> Result<Vec<Region>> {
    let split = region.midpoint_split()?;
    let (children, n) = region.child_regions(split);
    Ok(children[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_rows_split_at_five() {
        let r = Region::new(0, 11, 0, 11);
        assert_eq!(r.midpoint_split().unwrap(), Split::Quad { row: 5, col: 5 });
    }

    #[test]
    fn fifteen_rows_split_eight_seven() {
        let children = split_region(Region::new(0, 14, 0, 19)).unwrap();
        assert_eq!(children[0].rows(), 8);
        assert_eq!(children[2].rows(), 7);
        assert_eq!(children[0].cols(), 10);
    }

    #[test]
    fn two_by_two_gives_four_unit_children() {
        let children = split_region(Region::new(0, 1, 0, 1)).unwrap();
        assert_eq!(
            children,
            vec![
                Region::new(0, 0, 0, 0),
                Region::new(0, 0, 1, 1),
                Region::new(1, 1, 0, 0),
                Region::new(1, 1, 1, 1),
            ]
        );
    }

    #[test]
    fn single_row_splits_into_column_halves() {
        let children = split_region(Region::new(0, 0, 0, 3)).unwrap();
        assert_eq!(children, vec![Region::new(0, 0, 0, 1), Region::new(0, 0, 2, 3)]);
        // coverage check by enumeration
        for j in 0..4 {
            assert_eq!(children.iter().filter(|c| c.contains(0, j)).count(), 1);
        }
    }

    #[test]
    fn single_column_splits_into_row_halves() {
        let children = split_region(Region::new(2, 4, 7, 7)).unwrap();
        assert_eq!(children, vec![Region::new(2, 3, 7, 7), Region::new(4, 4, 7, 7)]);
    }

    #[test]
    fn unit_region_is_degenerate() {
        let err = split_region(Region::new(3, 3, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateRegion(_)));
    }

    fn region_strategy() -> impl Strategy<Value = Region> {
        (0usize..20, 0usize..20, 0usize..20, 0usize..20)
            .prop_map(|(a, h, b, w)| Region::new(a, a + h, b, b + w))
            .prop_filter("splittable", |r| !r.is_unit())
    }

    proptest! {
        #[test]
        fn children_partition_parent(region in region_strategy()) {
            let children = split_region(region).unwrap();
            prop_assert!(children.len() == 2 || children.len() == 4);
            let total: usize = children.iter().map(Region::cells).sum();
            prop_assert_eq!(total, region.cells());
            for c in &children {
                prop_assert!(c.r_start >= region.r_start && c.r_end <= region.r_end);
                prop_assert!(c.c_start >= region.c_start && c.c_end <= region.c_end);
            }
            for i in region.r_start..=region.r_end {
                for j in region.c_start..=region.c_end {
                    prop_assert_eq!(children.iter().filter(|c| c.contains(i, j)).count(), 1);
                }
            }
        }
    }
}
