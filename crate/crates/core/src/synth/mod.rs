//! Synthetic ground truth and simulated detector output.

mod benchmark;
mod motion;
mod noise;

pub use benchmark::{face_layout, make_benchmark, Benchmark, BenchmarkConfig, Detector, MotionFamily, Video};
pub use motion::{gen_ground_truth, MotionKind, MotionSpec, Segment};
pub use noise::{corrupt, pipeline_through_heatmaps, NoiseSpec};
