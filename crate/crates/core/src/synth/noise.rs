use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{decode_stack, render_heatmaps, DecodeMode, GridSpec, RenderMode};
use crate::landmarks::{LandmarkSet, TrajectorySequence};
use crate::par;

/// Simulated detector noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Image pixels.
    pub coordinate_noise_std: f64,
    /// Activation units, added to every heatmap pixel.
    #[serde(default)]
    pub heatmap_noise_std: f64,
    /// Probability that a frame is an outlier frame.
    #[serde(default)]
    pub outlier_rate: f64,
    /// Image pixels; replaces `coordinate_noise_std` on outlier frames.
    #[serde(default)]
    pub outlier_std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let stds = [self.coordinate_noise_std, self.heatmap_noise_std, self.outlier_std];
        if stds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("noise standard deviations must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::Config(format!("outlier_rate {} not in [0, 1]", self.outlier_rate)));
        }
        Ok(())
    }
}

fn normal(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))
}

/// Adds i.i.d. Gaussian noise to every coordinate. Each frame is an outlier
/// frame with probability `outlier_rate` and then uses `outlier_std`.
pub fn corrupt(p_seq: &TrajectorySequence, noise: &NoiseSpec) -> Result<TrajectorySequence> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let inlier = normal(noise.coordinate_noise_std)?;
    let outlier = normal(noise.outlier_std)?;
    let mut frames = Vec::with_capacity(p_seq.len());
    for p in &p_seq.frames {
        let dist = if rng.random::<f64>() < noise.outlier_rate {
            &outlier
        } else {
            &inlier
        };
        let coords = p.as_slice().iter().map(|v| v + dist.sample(&mut rng)).collect();
        frames.push(LandmarkSet::from_flat(coords)?);
    }
    Ok(p_seq.with_frames(frames))
}

/// Renders each frame to fractional heatmaps, adds pixel noise, and decodes
/// with `mode`. Frame `t` draws from its own stream of `seed`, so the result
/// does not depend on scheduling.
pub fn pipeline_through_heatmaps(
    p_seq: &TrajectorySequence,
    grid: &GridSpec,
    mode: DecodeMode,
    heatmap_noise_std: f64,
    seed: u64,
) -> Result<TrajectorySequence> {
    grid.validate()?;
    if !(heatmap_noise_std >= 0.0 && heatmap_noise_std.is_finite()) {
        return Err(Error::Config("heatmap_noise_std must be finite and >= 0".into()));
    }
    let dist = normal(heatmap_noise_std)?;
    let frames = par::try_map_range(p_seq.len(), |t| {
        let mut stack = render_heatmaps(&p_seq.frames[t], grid, RenderMode::Fractional)?;
        if heatmap_noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            for map in &mut stack.maps {
                for v in map.values_mut() {
                    *v += dist.sample(&mut rng);
                }
            }
        }
        decode_stack(&stack, mode)
    })?;
    Ok(p_seq.with_frames(frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize) -> TrajectorySequence {
        let frames = (0..frames)
            .map(|t| LandmarkSet::from_points(&[[100.0 + 0.37 * t as f64, 200.0 - 0.11 * t as f64], [300.5, 90.25]]).unwrap())
            .collect();
        TrajectorySequence::new("r", 100.0, [0.0, 0.0, 1024.0, 1024.0], frames).unwrap()
    }

    fn spec(std: f64, rate: f64, outlier: f64) -> NoiseSpec {
        NoiseSpec { coordinate_noise_std: std, heatmap_noise_std: 0.0, outlier_rate: rate, outlier_std: outlier, seed: 5 }
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = ramp(20);
        assert_eq!(corrupt(&p, &spec(0.0, 0.5, 0.0)).unwrap(), p);
    }

    #[test]
    fn variance_matches() {
        let p = ramp(5000);
        let z = corrupt(&p, &spec(2.0, 0.0, 0.0)).unwrap();
        let r: Vec<f64> = z.frames.iter().zip(&p.frames).flat_map(|(a, b)| {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect::<Vec<_>>()
        }).collect();
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn all_outliers_use_outlier_std() {
        let p = ramp(3000);
        let z = corrupt(&p, &spec(0.0, 1.0, 3.0)).unwrap();
        let n = 4.0 * 3000.0;
        let var: f64 = z.frames.iter().zip(&p.frames).flat_map(|(a, b)| {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).collect::<Vec<_>>()
        }).sum::<f64>() / n;
        assert!((var / 9.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn seeded() {
        let p = ramp(50);
        assert_eq!(corrupt(&p, &spec(1.0, 0.1, 5.0)).unwrap(), corrupt(&p, &spec(1.0, 0.1, 5.0)).unwrap());
    }

    #[test]
    fn heatmap_pipeline_fhr_identity() {
        let p = ramp(10);
        let grid = GridSpec::new(128, 128, 8.0, 3.0).unwrap();
        let z = pipeline_through_heatmaps(&p, &grid, DecodeMode::Fhr, 0.0, 1).unwrap();
        for (a, b) in z.frames.iter().zip(&p.frames) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn heatmap_noise_is_seeded() {
        let p = ramp(6);
        let grid = GridSpec::new(64, 64, 8.0, 2.0).unwrap();
        let a = pipeline_through_heatmaps(&p, &grid, DecodeMode::Fhr, 0.01, 3).unwrap();
        let b = pipeline_through_heatmaps(&p, &grid, DecodeMode::Fhr, 0.01, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, p);
    }
}
