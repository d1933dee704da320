//! Quadtree representation of binary layouts.

mod design;
mod region;
mod serialize;
mod stack;
mod tree;

pub use design::{DesignMatrix, Dims};
pub use region::{split_region, Region, Split};
pub use serialize::{deserialize_layout, deserialize_stack, serialize_layout, serialize_stack};
pub use stack::LayoutStack;
pub use tree::{grow_random, Axis, LeafInfo, NodeId, QuadtreeLayout};

