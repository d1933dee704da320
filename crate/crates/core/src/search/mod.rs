//! Predictor-guided search over quadtree layouts: the progressive tree
//! search, split-line refinement of its best entries, and the leaf-cap
//! schedule used across outer iterations.

mod refine;
mod schedule;
mod topk;
mod tree;

pub use refine::{importance_assignment, refine_top_k, DEFAULT_REFINE_STEPS};
pub use schedule::CapSchedule;
pub use topk::{TopKEntry, TopKList};
pub use tree::{
    tree_search, tree_search_traced, write_trace_csv, Action, SearchConfig, SearchOutcome, SearchStats,
    TraceRow,
};
