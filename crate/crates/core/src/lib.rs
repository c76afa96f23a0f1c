//! Dual convolutions on triangle mesh hierarchies for semantic segmentation.

pub mod cli;
pub mod convnet;
pub mod error;
pub mod hierarchy;
pub mod mesh;
pub mod neighborhoods;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};

/// Row-major per-vertex features.
pub type FeatureMatrix = ndarray::Array2<f64>;
