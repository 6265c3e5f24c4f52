use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{FrameBox, LandmarkSet, TrajectorySequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: MotionKind,
    pub frames: usize,
}

/// Displacement pattern applied on top of a rest layout. `t` counts frames
/// from the start of the motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MotionKind {
    Static,
    /// Rigid translation at a constant velocity (px/frame).
    Ramp { velocity: [f64; 2] },
    /// Rigid oscillation, per axis `amplitude * sin(2 pi t / period + phase)`.
    /// Phases a quarter turn apart give an ellipse.
    Sinusoid {
        amplitude: [f64; 2],
        period: f64,
        phase: [f64; 2],
    },
    /// Vertical pulse on a subset of landmarks, offset `rest` between blinks
    /// and `peak` while closed. A blink lasts `duty * period` frames and
    /// opens/closes along a raised-cosine edge of `edge` frames.
    Blink {
        rest: f64,
        peak: f64,
        duty: f64,
        period: f64,
        edge: f64,
        landmarks: Vec<usize>,
    },
    /// Segments played back to back; each continues from where the
    /// previous one ended.
    Piecewise { segments: Vec<Segment> },
}

impl MotionKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            MotionKind::Static => Ok(()),
            MotionKind::Ramp { velocity } if velocity.iter().all(|v| v.is_finite()) => Ok(()),
            MotionKind::Sinusoid { amplitude, period, phase }
                if amplitude.iter().chain(phase).all(|a| a.is_finite()) && *period > 0.0 =>
            {
                Ok(())
            }
            MotionKind::Blink { rest, peak, duty, period, edge, .. }
                if rest.is_finite()
                    && peak.is_finite()
                    && (0.0..=1.0).contains(duty)
                    && *period > 0.0
                    && *edge >= 0.0
                    && 2.0 * edge <= duty * period =>
            {
                Ok(())
            }
            MotionKind::Piecewise { segments } => segments.iter().try_for_each(|s| s.kind.validate()),
            other => Err(Error::Config(format!("invalid motion {other:?}"))),
        }
    }

    /// Short label for reports and video ids.
    pub fn label(&self) -> &'static str {
        match self {
            MotionKind::Static => "static",
            MotionKind::Ramp { .. } => "ramp",
            MotionKind::Sinusoid { .. } => "sinusoid",
            MotionKind::Blink { .. } => "blink",
            MotionKind::Piecewise { .. } => "piecewise",
        }
    }

    /// Offset of landmark `index` at frame `t`.
    pub fn displacement(&self, t: f64, index: usize) -> [f64; 2] {
        match self {
            MotionKind::Static => [0.0, 0.0],
            MotionKind::Ramp { velocity } => [velocity[0] * t, velocity[1] * t],
            MotionKind::Sinusoid { amplitude, period, phase } => {
                let w = TAU * t / period;
                [amplitude[0] * (w + phase[0]).sin(), amplitude[1] * (w + phase[1]).sin()]
            }
            MotionKind::Blink { rest, peak, duty, period, edge, landmarks } => {
                if !landmarks.contains(&index) {
                    return [0.0, 0.0];
                }
                let tau = t.rem_euclid(*period);
                let length = duty * period;
                let ramp = |s: f64| 0.5 * (1.0 - (PI * s / edge).cos());
                let pulse = if tau >= length {
                    0.0
                } else if tau < *edge {
                    ramp(tau)
                } else if tau > length - edge {
                    ramp(length - tau)
                } else {
                    1.0
                };
                [0.0, rest + (peak - rest) * pulse]
            }
            MotionKind::Piecewise { segments } => {
                let mut base = [0.0, 0.0];
                let mut start = 0.0;
                for (i, seg) in segments.iter().enumerate() {
                    let len = seg.frames as f64;
                    let origin = seg.kind.displacement(0.0, index);
                    if t < start + len || i + 1 == segments.len() {
                        let d = seg.kind.displacement(t - start, index);
                        return [base[0] + d[0] - origin[0], base[1] + d[1] - origin[1]];
                    }
                    let end = seg.kind.displacement(len, index);
                    base = [base[0] + end[0] - origin[0], base[1] + end[1] - origin[1]];
                    start += len;
                }
                base
            }
        }
    }
}

/// Everything needed to generate one ground-truth video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub video_id: String,
    pub kind: MotionKind,
    pub frames: usize,
    /// Rest positions, image pixels.
    pub layout: Vec<[f64; 2]>,
    pub norm_distance: f64,
    pub frame_box: FrameBox,
    /// Standard deviation of a per-video random perturbation of the layout.
    #[serde(default)]
    pub layout_jitter_std: f64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("motion needs at least one frame".into()));
        }
        if self.layout.is_empty() {
            return Err(Error::Config("layout has no landmarks".into()));
        }
        if !(self.norm_distance > 0.0) {
            return Err(Error::Config("norm_distance must be > 0".into()));
        }
        if !(self.layout_jitter_std >= 0.0) {
            return Err(Error::Config("layout_jitter_std must be >= 0".into()));
        }
        self.kind.validate()
    }
}

/// Generates a ground-truth trajectory; deterministic given `seed`.
pub fn gen_ground_truth(spec: &MotionSpec, seed: u64) -> Result<TrajectorySequence> {
    spec.validate()?;
    let mut layout = spec.layout.clone();
    if spec.layout_jitter_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spec.layout_jitter_std)
            .map_err(|e| Error::Config(e.to_string()))?;
        for p in &mut layout {
            p[0] += normal.sample(&mut rng);
            p[1] += normal.sample(&mut rng);
        }
    }
    let [x0, y0, x1, y1] = spec.frame_box;
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut coords = Vec::with_capacity(2 * layout.len());
        for (i, rest) in layout.iter().enumerate() {
            let d = spec.kind.displacement(t as f64, i);
            let (x, y) = (rest[0] + d[0], rest[1] + d[1]);
            if !(x >= x0 && x <= x1 && y >= y0 && y <= y1) {
                return Err(Error::OutOfFrame { frame: t, index: i });
            }
            coords.push(x);
            coords.push(y);
        }
        frames.push(LandmarkSet::from_flat(coords)?);
    }
    TrajectorySequence::new(spec.video_id.clone(), spec.norm_distance, spec.frame_box, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: MotionKind, frames: usize) -> MotionSpec {
        MotionSpec {
            video_id: "v".into(),
            kind,
            frames,
            layout: vec![[10.0, 10.0], [50.0, 60.0]],
            norm_distance: 40.0,
            frame_box: [0.0, 0.0, 200.0, 200.0],
            layout_jitter_std: 0.0,
        }
    }

    #[test]
    fn static_frames_identical() {
        let s = gen_ground_truth(&spec(MotionKind::Static, 5), 1).unwrap();
        assert!(s.frames.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn ramp_positions() {
        let s = gen_ground_truth(&spec(MotionKind::Ramp { velocity: [1.0, 0.0] }, 5), 1).unwrap();
        let xs: Vec<f64> = s.frames.iter().map(|f| f.point(0)[0]).collect();
        assert_eq!(xs, vec![10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn sinusoid_peak_deviation() {
        let kind = MotionKind::Sinusoid { amplitude: [7.0, 3.0], period: 20.0, phase: [0.0, 0.5] };
        let s = gen_ground_truth(&spec(kind, 41), 1).unwrap();
        let max_dev = s
            .frames
            .iter()
            .map(|f| (f.point(0)[0] - 10.0).abs())
            .fold(0.0, f64::max);
        assert!((max_dev - 7.0).abs() < 1e-9);
    }

    #[test]
    fn blink_moves_only_selected() {
        let kind = MotionKind::Blink { rest: 0.0, peak: 6.0, duty: 0.6, period: 10.0, edge: 2.0, landmarks: vec![1] };
        let s = gen_ground_truth(&spec(kind, 10), 1).unwrap();
        assert!(s.frames.iter().all(|f| f.point(0) == [10.0, 10.0]));
        let ys: Vec<f64> = s.frames.iter().map(|f| f.point(1)[1] - 60.0).collect();
        let expected = [0.0, 3.0, 6.0, 6.0, 6.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        for (y, e) in ys.iter().zip(expected) {
            assert!((y - e).abs() < 1e-12, "{ys:?}");
        }
    }

    #[test]
    fn piecewise_is_continuous() {
        let kind = MotionKind::Piecewise {
            segments: vec![
                Segment { kind: MotionKind::Ramp { velocity: [2.0, 0.0] }, frames: 5 },
                Segment { kind: MotionKind::Static, frames: 3 },
                Segment { kind: MotionKind::Ramp { velocity: [0.0, -1.0] }, frames: 4 },
            ],
        };
        let s = gen_ground_truth(&spec(kind, 12), 1).unwrap();
        let p: Vec<[f64; 2]> = s.frames.iter().map(|f| f.point(0)).collect();
        assert_eq!(p[4], [18.0, 10.0]);
        assert_eq!(p[5], [20.0, 10.0]);
        assert_eq!(p[7], [20.0, 10.0]);
        assert_eq!(p[8], [20.0, 10.0]);
        assert_eq!(p[11], [20.0, 7.0]);
    }

    #[test]
    fn leaving_box_names_frame() {
        let err = gen_ground_truth(&spec(MotionKind::Ramp { velocity: [50.0, 0.0] }, 10), 1).unwrap_err();
        match err {
            Error::OutOfFrame { frame, index } => assert_eq!((frame, index), (4, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let mut s = spec(MotionKind::Static, 3);
        s.layout_jitter_std = 1.0;
        assert_eq!(gen_ground_truth(&s, 9).unwrap(), gen_ground_truth(&s, 9).unwrap());
        assert_ne!(gen_ground_truth(&s, 9).unwrap(), gen_ground_truth(&s, 10).unwrap());
    }
}
