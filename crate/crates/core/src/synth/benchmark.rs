use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motion::{gen_ground_truth, MotionKind, MotionSpec, Segment};
use super::noise::{corrupt, pipeline_through_heatmaps, NoiseSpec};
use crate::error::{Error, Result};
use crate::heatmap::{DecodeMode, GridSpec};
use crate::landmarks::{FrameBox, TrajectorySequence};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionFamily {
    Static,
    Ramp,
    Sinusoid,
    Blink,
    Piecewise,
}

/// How detections are produced from ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Detector {
    /// Gaussian (and outlier) noise added directly to coordinates.
    Coordinate,
    /// Coordinate noise followed by a heatmap encode/decode round trip.
    Heatmap {
        grid: GridSpec,
        mode: DecodeMode,
        heatmap_noise_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub train_videos: usize,
    pub test_videos: usize,
    pub frames: usize,
    pub num_landmarks: usize,
    pub norm_distance: f64,
    pub frame_box: FrameBox,
    /// Families are assigned round-robin.
    pub motions: Vec<MotionFamily>,
    /// Coordinate noise levels (image px), cycled after every full round
    /// of motion families.
    pub noise_levels: Vec<f64>,
    pub outlier_rate: f64,
    pub outlier_std: f64,
    pub layout_jitter_std: f64,
    /// Ramp speed range in px/frame.
    pub ramp_speed: [f64; 2],
    /// Per-axis sinusoid amplitude range in px.
    pub sinusoid_amplitude: [f64; 2],
    /// Sinusoid period range in frames.
    pub sinusoid_period: [f64; 2],
    pub detector: Detector,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            train_videos: 20,
            test_videos: 10,
            frames: 300,
            num_landmarks: 7,
            norm_distance: 100.0,
            frame_box: [0.0, 0.0, 1024.0, 1024.0],
            motions: vec![
                MotionFamily::Ramp,
                MotionFamily::Sinusoid,
                MotionFamily::Blink,
                MotionFamily::Piecewise,
            ],
            noise_levels: vec![1.0, 1.5],
            outlier_rate: 0.0,
            outlier_std: 0.0,
            layout_jitter_std: 2.0,
            ramp_speed: [0.2, 0.6],
            sinusoid_amplitude: [4.0, 10.0],
            sinusoid_period: [60.0, 150.0],
            detector: Detector::Coordinate,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.num_landmarks == 0 {
            return Err(Error::Config("frames and num_landmarks must be >= 1".into()));
        }
        if self.motions.is_empty() || self.noise_levels.is_empty() {
            return Err(Error::Config("motions and noise_levels must be non-empty".into()));
        }
        if !(self.norm_distance > 0.0) {
            return Err(Error::Config("norm_distance must be > 0".into()));
        }
        let [x0, y0, x1, y1] = self.frame_box;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::Config(format!("degenerate frame box {:?}", self.frame_box)));
        }
        for (name, [lo, hi]) in [
            ("ramp_speed", self.ramp_speed),
            ("sinusoid_amplitude", self.sinusoid_amplitude),
            ("sinusoid_period", self.sinusoid_period),
        ] {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("{name} must be an increasing non-negative range")));
            }
        }
        if !(self.sinusoid_period[0] > 0.0) {
            return Err(Error::Config("sinusoid periods must be > 0".into()));
        }
        if let Detector::Heatmap { grid, heatmap_noise_std, .. } = &self.detector {
            grid.validate()?;
            if !(*heatmap_noise_std >= 0.0) {
                return Err(Error::Config("heatmap_noise_std must be >= 0".into()));
            }
        }
        for &level in &self.noise_levels {
            self.noise(level, 0).validate()?;
        }
        Ok(())
    }

    fn noise(&self, level: f64, seed: u64) -> NoiseSpec {
        NoiseSpec {
            coordinate_noise_std: level,
            heatmap_noise_std: match self.detector {
                Detector::Heatmap { heatmap_noise_std, .. } => heatmap_noise_std,
                Detector::Coordinate => 0.0,
            },
            outlier_rate: self.outlier_rate,
            outlier_std: self.outlier_std,
            seed,
        }
    }
}

/// One simulated video.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub motion: MotionSpec,
    pub noise: NoiseSpec,
    pub ground_truth: TrajectorySequence,
    pub detections: TrajectorySequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Vec<Video>,
    pub test: Vec<Video>,
}

impl Benchmark {
    pub fn split(videos: &[Video]) -> (Vec<TrajectorySequence>, Vec<TrajectorySequence>) {
        videos
            .iter()
            .map(|v| (v.detections.clone(), v.ground_truth.clone()))
            .unzip()
    }
}

/// Rest layout centered at the origin. Seven landmarks form a face: eyes,
/// nose, mouth corners and upper eyelids (the last two). Other counts are
/// placed on a circle.
pub fn face_layout(num_landmarks: usize, norm_distance: f64) -> Vec<[f64; 2]> {
    let u = norm_distance / 100.0;
    if num_landmarks == 7 {
        return [
            [-50.0, 0.0],
            [50.0, 0.0],
            [0.0, 40.0],
            [-35.0, 80.0],
            [35.0, 80.0],
            [-50.0, -8.0],
            [50.0, -8.0],
        ]
        .iter()
        .map(|p| [p[0] * u, p[1] * u])
        .collect();
    }
    (0..num_landmarks)
        .map(|i| {
            let a = TAU * i as f64 / num_landmarks as f64;
            [60.0 * u * a.cos(), 60.0 * u * a.sin()]
        })
        .collect()
}

fn eyelids(num_landmarks: usize) -> Vec<usize> {
    if num_landmarks >= 3 {
        vec![num_landmarks - 2, num_landmarks - 1]
    } else {
        vec![num_landmarks - 1]
    }
}

fn random_kind(family: MotionFamily, config: &BenchmarkConfig, rng: &mut ChaCha8Rng) -> MotionKind {
    let u = config.norm_distance / 100.0;
    let ramp = |rng: &mut ChaCha8Rng| {
        let speed = rng.random_range(config.ramp_speed[0]..=config.ramp_speed[1]);
        let dir = rng.random_range(0.0..TAU);
        MotionKind::Ramp { velocity: [speed * dir.cos(), speed * dir.sin()] }
    };
    // Elliptical paths keep the speed away from zero.
    let sinusoid = |rng: &mut ChaCha8Rng| {
        let phase = rng.random_range(0.0..TAU);
        let turn = if rng.random::<bool>() { FRAC_PI_2 } else { -FRAC_PI_2 };
        MotionKind::Sinusoid {
            amplitude: [
                rng.random_range(config.sinusoid_amplitude[0]..=config.sinusoid_amplitude[1]) * u,
                rng.random_range(config.sinusoid_amplitude[0]..=config.sinusoid_amplitude[1]) * u,
            ],
            period: rng.random_range(config.sinusoid_period[0]..=config.sinusoid_period[1]),
            phase: [phase, phase + turn],
        }
    };
    match family {
        MotionFamily::Static => MotionKind::Static,
        MotionFamily::Ramp => ramp(rng),
        MotionFamily::Sinusoid => sinusoid(rng),
        MotionFamily::Blink => {
            let period = rng.random_range(40..=90) as f64;
            let length = rng.random_range(8..=16) as f64;
            MotionKind::Blink {
                rest: 0.0,
                peak: rng.random_range(6.0..10.0) * u,
                duty: length / period,
                period,
                edge: rng.random_range(2..=3) as f64,
                landmarks: eyelids(config.num_landmarks),
            }
        }
        MotionFamily::Piecewise => {
            let mut cuts = [
                rng.random_range(0.2..0.45),
                rng.random_range(0.55..0.8),
            ]
            .map(|c| (c * config.frames as f64) as usize);
            cuts.sort_unstable();
            let lens = [cuts[0], cuts[1] - cuts[0], config.frames - cuts[1]];
            let kinds = [ramp(rng), MotionKind::Static, sinusoid(rng)];
            MotionKind::Piecewise {
                segments: kinds
                    .into_iter()
                    .zip(lens)
                    .map(|(kind, frames)| Segment { kind, frames })
                    .collect(),
            }
        }
    }
}

fn family_label(family: MotionFamily) -> &'static str {
    match family {
        MotionFamily::Static => "static",
        MotionFamily::Ramp => "ramp",
        MotionFamily::Sinusoid => "sinusoid",
        MotionFamily::Blink => "blink",
        MotionFamily::Piecewise => "piecewise",
    }
}

fn make_video(config: &BenchmarkConfig, split: &str, index: usize, stream: u64, seed: u64) -> Result<Video> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let family = config.motions[index % config.motions.len()];
    let level = config.noise_levels[(index / config.motions.len()) % config.noise_levels.len()];
    let kind = random_kind(family, config, &mut rng);
    let layout = face_layout(config.num_landmarks, config.norm_distance);

    // Extent of the whole trajectory relative to the layout origin.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for t in 0..config.frames {
        for (i, rest) in layout.iter().enumerate() {
            let d = kind.displacement(t as f64, i);
            for a in 0..2 {
                lo[a] = lo[a].min(rest[a] + d[a]);
                hi[a] = hi[a].max(rest[a] + d[a]);
            }
        }
    }
    let [x0, y0, x1, y1] = config.frame_box;
    let margin = 16.0 * config.norm_distance / 100.0 + 4.0 * config.layout_jitter_std;
    let mut origin = [0.0; 2];
    for (a, (min, max)) in [(x0, x1), (y0, y1)].into_iter().enumerate() {
        let slack = (max - min) - (hi[a] - lo[a]) - 2.0 * margin;
        if slack < 0.0 {
            return Err(Error::Config(format!(
                "{split} video {index}: motion does not fit the frame box"
            )));
        }
        origin[a] = min + margin - lo[a] + rng.random_range(0.0..=slack);
    }
    let motion = MotionSpec {
        video_id: format!("{split}-{index:02}-{}", family_label(family)),
        kind,
        frames: config.frames,
        layout: layout.iter().map(|p| [p[0] + origin[0], p[1] + origin[1]]).collect(),
        norm_distance: config.norm_distance,
        frame_box: config.frame_box,
        layout_jitter_std: config.layout_jitter_std,
    };
    let ground_truth = gen_ground_truth(&motion, rng.random())?;
    let noise = config.noise(level, rng.random());
    let corrupted = corrupt(&ground_truth, &noise)?;
    let detections = match &config.detector {
        Detector::Coordinate => corrupted,
        Detector::Heatmap { grid, mode, heatmap_noise_std } => {
            pipeline_through_heatmaps(&corrupted, grid, *mode, *heatmap_noise_std, rng.random())?
        }
    };
    Ok(Video { motion, noise, ground_truth, detections })
}

/// Builds the train and test suites. Every video has its own random
/// stream, so the suite is the same whether or not generation runs in
/// parallel.
pub fn make_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<Benchmark> {
    config.validate()?;
    let train = par::try_map_range(config.train_videos, |i| make_video(config, "train", i, i as u64, seed))?;
    let test = par::try_map_range(config.test_videos, |i| {
        make_video(config, "test", i, (1u64 << 32) + i as u64, seed)
    })?;
    Ok(Benchmark { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig { train_videos: 4, test_videos: 3, frames: 60, ..Default::default() }
    }

    #[test]
    fn sizes_and_ids() {
        let b = make_benchmark(&small(), 7).unwrap();
        assert_eq!((b.train.len(), b.test.len()), (4, 3));
        assert_eq!(b.test[0].ground_truth.video_id, "test-00-ramp");
        assert_eq!(b.train[3].ground_truth.video_id, "train-03-piecewise");
        for v in b.train.iter().chain(&b.test) {
            assert_eq!(v.ground_truth.len(), 60);
            assert_eq!(v.detections.num_landmarks(), 7);
        }
    }

    #[test]
    fn same_seed_same_suite() {
        assert_eq!(make_benchmark(&small(), 3).unwrap(), make_benchmark(&small(), 3).unwrap());
        assert_ne!(make_benchmark(&small(), 3).unwrap(), make_benchmark(&small(), 4).unwrap());
    }

    #[test]
    fn heatmap_detector_runs() {
        let config = BenchmarkConfig {
            train_videos: 1,
            test_videos: 0,
            frames: 5,
            detector: Detector::Heatmap {
                grid: GridSpec::new(128, 128, 8.0, 2.0).unwrap(),
                mode: DecodeMode::Chr,
                heatmap_noise_std: 0.0,
            },
            noise_levels: vec![0.0],
            ..Default::default()
        };
        let b = make_benchmark(&config, 1).unwrap();
        for f in &b.train[0].detections.frames {
            assert!(f.as_slice().iter().all(|v| v % 8.0 == 0.0));
        }
    }
}
