//! Anatomy-aware multi-label finding classification over pre-extracted
//! region features.
//!
//! The library covers the full desk-scale pipeline:
//!
//! - [`tensor`]: dense `f64` matrices with explicit forward/backward
//!   contracts, a named parameter store, Adam, and a finite-difference
//!   gradient checker.
//! - [`adjacency`]: region-correlation graphs built from label statistics
//!   (multiset Jaccard, thresholding, symmetric normalization).
//! - [`model`]: the AnaXNet head (two GCN layers, non-local attention,
//!   concatenation classifier, BCE loss) with hand-derived gradients,
//!   plus the per-region fully-connected baseline.
//! - [`data`]: binary dataset/checkpoint formats and a synthetic generator
//!   with a planted region graph.
//! - [`eval`]: per-(label, region) ROC-AUC reports and model comparison.
//! - [`train`]: reproducible mini-batch training.

pub mod adjacency;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Matrix;
