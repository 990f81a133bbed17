//! Meta-learning engine for multilingual sentence-level semantic search.
//!
//! The crate provides a small trainable encoder with exact analytic
//! gradients, triplet/regression/distillation objectives, episodic meta-task
//! curation across language-transfer modes, MAML and meta-distillation
//! training loops, and retrieval/regression evaluation with cross-validated
//! reports. See the `examples/` directory for one runnable program per major
//! capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod learners;
pub mod losses;
pub mod meta_tasks;
pub mod model;

pub use error::{Error, Result};
