use rand::Rng as _;

use super::design::{DesignMatrix, Dims};
use super::region::{Region, Split};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Arena index of a node inside a [`QuadtreeLayout`].
pub type NodeId = usize;

#[derive(Clone, Debug)]
pub(crate) enum NodeKind {
    Leaf { state: u8, slot: usize },
    Internal { split: Split, children: [NodeId; 4] },
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) region: Region,
    pub(crate) kind: NodeKind,
}

/// One leaf as reported by [`QuadtreeLayout::leaves`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafInfo {
    pub id: NodeId,
    pub region: Region,
    pub state: u8,
}

/// Split-line axis used when refining partition parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Row,
    Col,
}

/// Quadtree encoding of a single-layer binary layout.
///
/// Node 0 is the root. Leaves partition the grid; every leaf carries one
/// binary state. Mutating operations come in two flavours: value-returning
/// (`split_leaf`, `resample_leaf`) and in-place (`*_in_place`) for hot loops.
#[derive(Clone, Debug)]
pub struct QuadtreeLayout {
    rows: usize,
    cols: usize,
    nodes: Vec<Node>,
    // leaf node ids in arena order; each leaf stores its slot here
    leaf_slots: Vec<NodeId>,
}

impl QuadtreeLayout {
    /// Root-only layout with the given state.
    pub fn new(rows: usize, cols: usize, state: u8) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("empty grid {rows}x{cols}")));
        }
        Ok(QuadtreeLayout {
            rows,
            cols,
            nodes: vec![Node {
                region: Region::full(rows, cols),
                kind: NodeKind::Leaf {
                    state: state & 1,
                    slot: 0,
                },
            }],
            leaf_slots: vec![0],
        })
    }

    /// Root-only layout with a uniformly drawn state.
    pub fn random_root(rows: usize, cols: usize, rng: &mut Rng) -> Result<Self> {
        let state = rng.gen::<bool>() as u8;
        Self::new(rows, cols, state)
    }

    pub(crate) fn from_nodes(rows: usize, cols: usize, nodes: Vec<Node>) -> Self {
        let mut layout = QuadtreeLayout {
            rows,
            cols,
            nodes,
            leaf_slots: Vec::new(),
        };
        for id in 0..layout.nodes.len() {
            if let NodeKind::Leaf { slot, .. } = &mut layout.nodes[id].kind {
                *slot = layout.leaf_slots.len();
                layout.leaf_slots.push(id);
            }
        }
        layout
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.rows, self.cols, 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_slots.len()
    }

    /// Leaf ids in arena order. Uniform sampling from this slice is uniform
    /// over leaves; use [`leaves`](Self::leaves) for the canonical order.
    pub fn leaf_ids(&self) -> &[NodeId] {
        &self.leaf_slots
    }

    pub fn region(&self, id: NodeId) -> Result<Region> {
        self.nodes
            .get(id)
            .map(|n| n.region)
            .ok_or(Error::UnknownNode(id))
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id), Some(Node { kind: NodeKind::Leaf { .. }, .. }))
    }

    /// State of a leaf node.
    pub fn state(&self, id: NodeId) -> Result<u8> {
        match self.nodes.get(id) {
            Some(Node {
                kind: NodeKind::Leaf { state, .. },
                ..
            }) => Ok(*state),
            Some(_) => Err(Error::NotALeaf(id)),
            None => Err(Error::UnknownNode(id)),
        }
    }

    /// Children of an internal node in canonical order, or `None` for leaves.
    pub fn children(&self, id: NodeId) -> Result<Option<&[NodeId]>> {
        match self.nodes.get(id) {
            Some(Node {
                kind: NodeKind::Internal { split, children },
                ..
            }) => Ok(Some(&children[..split.arity()])),
            Some(_) => Ok(None),
            None => Err(Error::UnknownNode(id)),
        }
    }

    pub fn split_of(&self, id: NodeId) -> Option<Split> {
        match self.nodes.get(id) {
            Some(Node {
                kind: NodeKind::Internal { split, .. },
                ..
            }) => Some(*split),
            _ => None,
        }
    }

    pub(crate) fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Leaves in pre-order (children visited upper-left, upper-right,
    /// lower-left, lower-right).
    pub fn leaves(&self) -> Vec<LeafInfo> {
        let mut out = Vec::with_capacity(self.leaf_count());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            match &node.kind {
                NodeKind::Leaf { state, .. } => out.push(LeafInfo {
                    id,
                    region: node.region,
                    state: *state,
                }),
                NodeKind::Internal { split, children } => {
                    stack.extend(children[..split.arity()].iter().rev());
                }
            }
        }
        out
    }

    /// Internal node ids in pre-order.
    pub fn internal_nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if let NodeKind::Internal { split, children } = &self.nodes[id].kind {
                out.push(id);
                stack.extend(children[..split.arity()].iter().rev());
            }
        }
        out
    }

    fn leaf_slot(&self, id: NodeId) -> Result<(usize, u8)> {
        match self.nodes.get(id) {
            Some(Node {
                kind: NodeKind::Leaf { slot, state },
                ..
            }) => Ok((*slot, *state)),
            Some(_) => Err(Error::NotALeaf(id)),
            None => Err(Error::UnknownNode(id)),
        }
    }

    /// Number of leaves a midpoint split of `id` would add, or `None` if the
    /// node is not a splittable leaf.
    pub fn split_growth(&self, id: NodeId) -> Option<usize> {
        match self.nodes.get(id) {
            Some(Node {
                region,
                kind: NodeKind::Leaf { .. },
            }) => region.midpoint_split().ok().map(|s| s.arity() - 1),
            _ => None,
        }
    }

    /// Splits a leaf at its midpoints; children get independent uniform
    /// states. Returns the ids of the new children.
    pub fn split_leaf_in_place(&mut self, id: NodeId, rng: &mut Rng) -> Result<Vec<NodeId>> {
        let (slot, _) = self.leaf_slot(id)?;
        let region = self.nodes[id].region;
        let split = region.midpoint_split()?;
        let (regions, arity) = region.child_regions(split);
        let mut children = [0usize; 4];
        for k in 0..arity {
            let child = self.nodes.len();
            let state = rng.gen::<bool>() as u8;
            let child_slot = if k == 0 { slot } else { self.leaf_slots.len() };
            if k == 0 {
                self.leaf_slots[slot] = child;
            } else {
                self.leaf_slots.push(child);
            }
            self.nodes.push(Node {
                region: regions[k],
                kind: NodeKind::Leaf {
                    state,
                    slot: child_slot,
                },
            });
            children[k] = child;
        }
        self.nodes[id].kind = NodeKind::Internal { split, children };
        Ok(children[..arity].to_vec())
    }

    pub fn split_leaf(&self, id: NodeId, rng: &mut Rng) -> Result<Self> {
        let mut out = self.clone();
        out.split_leaf_in_place(id, rng)?;
        Ok(out)
    }

    pub fn set_state_in_place(&mut self, id: NodeId, state: u8) -> Result<()> {
        self.leaf_slot(id)?;
        if let NodeKind::Leaf { state: s, .. } = &mut self.nodes[id].kind {
            *s = state & 1;
        }
        Ok(())
    }

    /// Redraws a leaf's state uniformly. Returns the new state.
    pub fn resample_leaf_in_place(&mut self, id: NodeId, rng: &mut Rng) -> Result<u8> {
        self.leaf_slot(id)?;
        let state = rng.gen::<bool>() as u8;
        self.set_state_in_place(id, state)?;
        Ok(state)
    }

    pub fn resample_leaf(&self, id: NodeId, rng: &mut Rng) -> Result<Self> {
        let mut out = self.clone();
        out.resample_leaf_in_place(id, rng)?;
        Ok(out)
    }

    pub fn with_state(&self, id: NodeId, state: u8) -> Result<Self> {
        let mut out = self.clone();
        out.set_state_in_place(id, state)?;
        Ok(out)
    }

    /// Single-layer design matrix: each pixel takes the state of the leaf
    /// covering it.
    pub fn reconstruct(&self) -> DesignMatrix {
        let mut design = DesignMatrix::zeros(self.dims());
        self.fill_layer(design.cells_mut());
        design
    }

    /// Paints this layout into a row-major `rows * cols` buffer.
    pub(crate) fn fill_layer(&self, buf: &mut [u8]) {
        for &id in &self.leaf_slots {
            let node = &self.nodes[id];
            if let NodeKind::Leaf { state, .. } = node.kind {
                paint(buf, self.cols, node.region, state);
            }
        }
    }

    /// Moves one split line of an internal node by `delta` cells and re-fits
    /// the subtree below it. Descendant split lines keep their absolute
    /// position, clamped into their new region. Returns `None` when the move
    /// leaves the parent bounds or some descendant can no longer hold its
    /// split.
    pub fn move_split(&self, id: NodeId, axis: Axis, delta: isize) -> Option<Self> {
        let node = self.nodes.get(id)?;
        let NodeKind::Internal { split, .. } = node.kind else {
            return None;
        };
        let shift = |p: usize| -> Option<usize> {
            let q = p as isize + delta;
            (q >= 0).then_some(q as usize)
        };
        let moved = match (split, axis) {
            (Split::Quad { row, col }, Axis::Row) => Split::Quad {
                row: shift(row)?,
                col,
            },
            (Split::Quad { row, col }, Axis::Col) => Split::Quad {
                row,
                col: shift(col)?,
            },
            (Split::Rows { row }, Axis::Row) => Split::Rows { row: shift(row)? },
            (Split::Cols { col }, Axis::Col) => Split::Cols { col: shift(col)? },
            _ => return None,
        };
        if !node.region.admits(moved) {
            return None;
        }
        let mut out = self.clone();
        if let NodeKind::Internal { split, .. } = &mut out.nodes[id].kind {
            *split = moved;
        }
        out.refit(id).then_some(out)
    }

    fn refit(&mut self, id: NodeId) -> bool {
        let region = self.nodes[id].region;
        let NodeKind::Internal { split, children } = self.nodes[id].kind else {
            return true;
        };
        let (regions, arity) = region.child_regions(split);
        for k in 0..arity {
            let child = children[k];
            let child_region = regions[k];
            self.nodes[child].region = child_region;
            if let NodeKind::Internal { split: child_split, .. } = &mut self.nodes[child].kind {
                match clamp_split(child_region, *child_split) {
                    Some(s) => *child_split = s,
                    None => return false,
                }
                if !self.refit(child) {
                    return false;
                }
            }
        }
        true
    }

    /// Structural equality from the root down, ignoring arena numbering.
    fn same_subtree(&self, a: NodeId, other: &Self, b: NodeId) -> bool {
        let (na, nb) = (&self.nodes[a], &other.nodes[b]);
        if na.region != nb.region {
            return false;
        }
        match (&na.kind, &nb.kind) {
            (NodeKind::Leaf { state: sa, .. }, NodeKind::Leaf { state: sb, .. }) => sa == sb,
            (
                NodeKind::Internal {
                    split: pa,
                    children: ca,
                },
                NodeKind::Internal {
                    split: pb,
                    children: cb,
                },
            ) => {
                pa == pb
                    && (0..pa.arity()).all(|k| self.same_subtree(ca[k], other, cb[k]))
            }
            _ => false,
        }
    }
}

impl PartialEq for QuadtreeLayout {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.same_subtree(0, other, 0)
    }
}

impl Eq for QuadtreeLayout {}

fn paint(buf: &mut [u8], cols: usize, region: Region, state: u8) {
    for i in region.r_start..=region.r_end {
        buf[i * cols + region.c_start..=i * cols + region.c_end].fill(state);
    }
}

fn clamp_split(region: Region, split: Split) -> Option<Split> {
    let row = |r: usize| (region.rows() >= 2).then(|| r.clamp(region.r_start, region.r_end - 1));
    let col = |c: usize| (region.cols() >= 2).then(|| c.clamp(region.c_start, region.c_end - 1));
    match split {
        Split::Quad { row: r, col: c } => Some(Split::Quad {
            row: row(r)?,
            col: col(c)?,
        }),
        Split::Rows { row: r } => Some(Split::Rows { row: row(r)? }),
        Split::Cols { col: c } => Some(Split::Cols { col: col(c)? }),
    }
}

/// Grows a layout from a random root by splitting uniformly chosen leaves
/// until no further split fits under `cap` leaves. All states are uniform.
pub fn grow_random(rows: usize, cols: usize, cap: usize, rng: &mut Rng) -> Result<QuadtreeLayout> {
    let mut layout = QuadtreeLayout::random_root(rows, cols, rng)?;
    let mut eligible = Vec::new();
    loop {
        eligible.clear();
        let count = layout.leaf_count();
        eligible.extend(layout.leaf_ids().iter().copied().filter(|&id| {
            layout
                .split_growth(id)
                .is_some_and(|g| count + g <= cap)
        }));
        if eligible.is_empty() {
            return Ok(layout);
        }
        let id = eligible[rng.gen_range(0..eligible.len())];
        layout.split_leaf_in_place(id, rng)?;
    }
}
