//! Motif-guided semantic graph construction and negative-free dual-view
//! graph contrastive learning.

pub mod autodiff;
pub mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod motif;
pub mod pipeline;
pub mod semantic;
pub mod synth;
pub mod trainer;
pub mod views;

pub use dense::Matrix;
pub use error::{Error, Result};
pub use graph::{FeatureMatrix, LabelSet, SparseGraph};
