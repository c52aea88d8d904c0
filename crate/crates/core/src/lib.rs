//! Covariance sketches (Frequent Directions and its robust variant) and
//! sketched online Newton learners built on them.

pub mod data;
pub mod error;
pub mod linalg;
pub mod online;
pub mod sketch;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{Dataset, SparseExample};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use sketch::{RfdSketch, SketchConfig, SketchVariant};
pub use online::{Algorithm, OnsConfig, OnsState};
