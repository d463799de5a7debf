//! Few-shot single-image 3D voxel reconstruction via category-specific
//! shape priors: a self-contained f64 implementation of the dual-encoder
//! refinement network, its training loop, a procedural synthetic dataset,
//! and the evaluation harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod ops;
pub mod prior;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Tool version stamped into run directories and reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
