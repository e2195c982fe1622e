//! Training-free evaluation of frozen audio-embedding geometry.

pub mod baselines;
pub mod clustering;
pub mod distances;
pub mod dtw;
pub mod error;
pub mod metrics;
pub mod pca;
pub mod perception;
pub mod pipeline;
pub mod pooling;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
