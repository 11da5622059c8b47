//! Extraction of formal dependencies from natural-language protocol
//! specifications.
//!
//! The pipeline mines a terminology lexicon from specification tables,
//! extracts source–relation–target triples from dependency parses, labels
//! them into training examples and trains a transformer encoder with two
//! token-classification heads. Predictions are exported as rows of a
//! formal dependency table.

pub mod dataset;
pub mod export;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod srt;
pub mod train;

pub use scalar::Scalar;

/// Single-precision model used for training and inference.
pub type Model = model::JointModel<f32>;
/// Double-precision model used for gradient checks.
pub type ModelF64 = model::JointModel<f64>;
/// Single-precision matrix.
pub type Matrix = model::Matrix<f32>;
