//! Sub-pixel heatmap coding and Bayesian temporal stabilization of
//! landmark trajectories, with baselines, metrics and a synthetic
//! benchmark generator.
//!
//! Per-video and per-landmark work runs on rayon when the `parallel`
//! feature is enabled (the default); without it everything runs
//! sequentially with identical results.

pub mod baselines;
pub mod error;
pub mod heatmap;
pub mod landmarks;
pub mod metrics;
pub mod par;
pub mod stabilizer;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use landmarks::{FrameBox, LandmarkSet, TrajectoryFile, TrajectorySequence};
