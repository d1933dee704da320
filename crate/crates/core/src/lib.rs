//! Progressive quadtree search for black-box optimization of binary grid
//! layouts under a hard evaluation budget.
//!
//! The crate is organised bottom-up:
//!
//! * [`layout`] holds the quadtree encoding of binary design matrices.
//! * [`oracle`] meters the expensive evaluator and ships synthetic benchmarks.
//! * [`predictor`] provides the trainable surrogate and its reference
//!   ridge-regression implementation.
//! * [`search`] runs the progressive tree search and split-line refinement.
//! * [`selection`] measures ranking consistency and mixes exploitation with
//!   exploration when choosing designs to evaluate.
//! * [`pqs`] is the outer loop tying everything together.
//! * [`baselines`] contains comparison optimizers and ablation harnesses.

pub mod baselines;
pub mod error;
pub mod features;
pub mod layout;
pub mod oracle;
pub mod persist;
pub mod pqs;
pub mod predictor;
pub mod search;
pub mod seed;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
