//! From-scratch training, evaluation and explainability stack for telling
//! real photographs apart from AI-generated images.
//!
//! The crate provides:
//! - a rank-4 tensor core with a seeded, portable RNG ([`tensor`], [`rng`])
//! - a CNN with hand-derived backpropagation and Adam ([`nn`])
//! - CIFAR-10 binary and PNG-tree dataset ingestion ([`data`])
//! - forward-diffusion noising utilities ([`diffusion`])
//! - confusion-matrix metrics ([`metrics`])
//! - the two-stage 36-network topology grid search ([`search`])
//! - Grad-CAM heatmaps and overlays ([`gradcam`])
//! - checkpoint persistence, config and command entry points
//!   ([`checkpoint`], [`config`], [`commands`])
//!
//! See the crate examples for runnable end-to-end demonstrations of each
//! capability.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod gradcam;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod search;
pub mod tensor;
pub mod training;

pub use rng::SeededRng;
pub use tensor::{FillSpec, Tensor4};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
