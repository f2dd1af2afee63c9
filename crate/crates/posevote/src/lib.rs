//! Dense keypoint voting and staged MAP pose estimation.
//!
//! The crate turns per-patch softmax "voter fields" over log-polar
//! displacement classes into keypoint heatmaps, image-dependent joint
//! keypoint distributions (consensus voting), and a final pose estimate
//! obtained by sequential MAP inference over a pairwise energy.

pub mod config;
pub mod consensus;
pub mod format;
pub mod geometry;
pub mod metrics;
pub mod mrf;
pub mod pipeline;
pub mod prior;
pub mod synth;
pub mod voting;

mod error;

pub use error::{Error, Result};
