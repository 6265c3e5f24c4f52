//! Accuracy and stability metrics for landmark trajectories.
//!
//! All percentages are relative to the per-video normalization distance
//! (an inter-ocular distance for faces).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{check_aligned, TrajectorySequence};

/// Failure threshold and AUC integration bound, in percent NRMSE.
pub const DEFAULT_THRESHOLD: f64 = 8.0;
/// Largest shift searched by [`lag_estimate`].
pub const MAX_LAG: usize = 5;
const MIN_MOTION: f64 = 1e-6;

fn check_norm(norm_distance: f64) -> Result<()> {
    if !(norm_distance > 0.0 && norm_distance.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "normalization distance must be > 0, got {norm_distance}"
        )));
    }
    Ok(())
}

fn mean_point_error(x: &[f64], p: &[f64]) -> f64 {
    let m = x.len() / 2;
    x.chunks_exact(2)
        .zip(p.chunks_exact(2))
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .sum::<f64>()
        / m as f64
}

fn differences(seq: &TrajectorySequence) -> Vec<Vec<f64>> {
    seq.frames
        .windows(2)
        .map(|w| {
            w[1].as_slice()
                .iter()
                .zip(w[0].as_slice())
                .map(|(b, a)| b - a)
                .collect()
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-frame NRMSE (percent).
pub fn per_frame_nrmse(
    x_seq: &TrajectorySequence,
    p_seq: &TrajectorySequence,
    norm_distance: f64,
) -> Result<Vec<f64>> {
    check_aligned(x_seq, p_seq)?;
    check_norm(norm_distance)?;
    Ok(x_seq
        .frames
        .iter()
        .zip(&p_seq.frames)
        .map(|(x, p)| mean_point_error(x.as_slice(), p.as_slice()) / norm_distance * 100.0)
        .collect())
}

/// Mean over frames of the mean landmark error, as a percentage of
/// `norm_distance`.
pub fn nrmse(x_seq: &TrajectorySequence, p_seq: &TrajectorySequence, norm_distance: f64) -> Result<f64> {
    Ok(mean(&per_frame_nrmse(x_seq, p_seq, norm_distance)?))
}

/// AUC of the cumulative error distribution up to `threshold`, and the
/// failure rate above it, both in percent.
///
/// The CED is the empirical step function, so its integral is exact:
/// `AUC = mean_i max(0, threshold - e_i) / threshold`.
pub fn ced_auc_failure(per_image_nrmse: &[f64], threshold: f64) -> Result<(f64, f64)> {
    if per_image_nrmse.is_empty() {
        return Err(Error::InsufficientData("empty error list".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParams(format!("threshold must be > 0, got {threshold}")));
    }
    let n = per_image_nrmse.len() as f64;
    let area: f64 = per_image_nrmse
        .iter()
        .map(|&e| (threshold - e).clamp(0.0, threshold))
        .sum();
    let failures = per_image_nrmse.iter().filter(|&&e| e > threshold).count();
    Ok((area / (n * threshold) * 100.0, failures as f64 / n * 100.0))
}

/// Per-frame NRMSE between frame-to-frame motions, for frames `1..T`.
pub fn per_frame_stability(
    x_seq: &TrajectorySequence,
    p_seq: &TrajectorySequence,
    norm_distance: f64,
) -> Result<Vec<f64>> {
    check_aligned(x_seq, p_seq)?;
    check_norm(norm_distance)?;
    if x_seq.len() < 2 {
        return Err(Error::InsufficientData(
            "stability needs at least two frames".into(),
        ));
    }
    Ok(differences(x_seq)
        .iter()
        .zip(&differences(p_seq))
        .map(|(dx, dp)| mean_point_error(dx, dp) / norm_distance * 100.0)
        .collect())
}

/// NRMSE applied to the motion vectors `x^(t) - x^(t-1)` and
/// `p^(t) - p^(t-1)`.
pub fn stability_nrmse(
    x_seq: &TrajectorySequence,
    p_seq: &TrajectorySequence,
    norm_distance: f64,
) -> Result<f64> {
    Ok(mean(&per_frame_stability(x_seq, p_seq, norm_distance)?))
}

/// Running sums behind [`stability_decomposition`], so several videos can
/// be pooled.
#[derive(Debug, Clone, Default)]
struct DecompositionSums {
    magnitude: Vec<f64>,
    magnitude_count: usize,
    angle: Vec<f64>,
    angle_count: Vec<usize>,
}

impl DecompositionSums {
    fn new(m: usize) -> Self {
        Self {
            magnitude: vec![0.0; m],
            magnitude_count: 0,
            angle: vec![0.0; m],
            angle_count: vec![0; m],
        }
    }

    fn add(&mut self, x_seq: &TrajectorySequence, p_seq: &TrajectorySequence) {
        for (dx, dp) in differences(x_seq).iter().zip(&differences(p_seq)) {
            self.magnitude_count += 1;
            for (i, (a, b)) in dx.chunks_exact(2).zip(dp.chunks_exact(2)).enumerate() {
                let (ex, ey) = (a[0] - b[0], a[1] - b[1]);
                self.magnitude[i] += ex * ex + ey * ey;
                let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
                if na >= MIN_MOTION && nb >= MIN_MOTION {
                    let cos = ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0);
                    self.angle[i] += cos.acos().to_degrees();
                    self.angle_count[i] += 1;
                }
            }
        }
    }

    fn finish(&self) -> (Vec<f64>, Vec<f64>) {
        let magnitude = self
            .magnitude
            .iter()
            .map(|s| if self.magnitude_count == 0 { 0.0 } else { s / self.magnitude_count as f64 })
            .collect();
        let orientation = self
            .angle
            .iter()
            .zip(&self.angle_count)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        (magnitude, orientation)
    }
}

/// Per landmark: mean squared norm of `dx - dp`, and mean absolute angle
/// (degrees, in `[0, 180]`) between `dx` and `dp`. Frames where either motion
/// is shorter than `1e-6` px are skipped for the angle.
pub fn stability_decomposition(
    x_seq: &TrajectorySequence,
    p_seq: &TrajectorySequence,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_aligned(x_seq, p_seq)?;
    if x_seq.len() < 2 {
        return Err(Error::InsufficientData(
            "stability needs at least two frames".into(),
        ));
    }
    let mut sums = DecompositionSums::new(x_seq.num_landmarks());
    sums.add(x_seq, p_seq);
    Ok(sums.finish())
}

/// Delay of `x` behind `p` in frames.
///
/// For each integer shift `s` the mean squared distance between `x^(t)` and
/// `p^(t - s)` is computed over a common window; the best shift in
/// `[0, MAX_LAG]` is refined by fitting a parabola through its neighbours
/// (shift `-1` is evaluated so a best shift of 0 can still be refined).
/// Sequences where the error does not depend on the shift report 0.
pub fn lag_estimate(x_seq: &TrajectorySequence, p_seq: &TrajectorySequence) -> Result<f64> {
    check_aligned(x_seq, p_seq)?;
    let n = x_seq.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "lag estimate needs at least 8 frames, got {n}"
        )));
    }
    // shifts -1 ..= MAX_LAG + 1, window t in [MAX_LAG + 1, n - 1)
    let max_shift = (MAX_LAG + 1).min(n - 3);
    let start = max_shift;
    let end = n - 1;
    let error_at = |s: i64| -> f64 {
        let mut total = 0.0;
        for t in start..end {
            let x = x_seq.frames[t].as_slice();
            let p = p_seq.frames[(t as i64 - s) as usize].as_slice();
            total += x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total / (end - start) as f64
    };
    let shifts: Vec<i64> = (-1..=max_shift as i64).collect();
    let errors: Vec<f64> = shifts.iter().map(|&s| error_at(s)).collect();
    let spread = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - errors.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = errors.iter().copied().fold(0.0f64, f64::max);
    if spread <= 1e-12 * scale.max(1e-300) {
        return Ok(0.0);
    }
    // index 0 is shift -1; search shifts 0..=min(MAX_LAG, max_shift - 1)
    let last = MAX_LAG.min(max_shift - 1) + 1;
    let mut best = 1;
    for i in 2..=last {
        if errors[i] < errors[best] {
            best = i;
        }
    }
    let (em, e0, ep) = (errors[best - 1], errors[best], errors[best + 1]);
    let curvature = em - 2.0 * e0 + ep;
    let offset = if curvature > 0.0 {
        (0.5 * (em - ep) / curvature).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok((shifts[best] as f64 + offset).clamp(0.0, MAX_LAG as f64))
}

/// Summary for one method over a set of videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub num_videos: usize,
    pub num_frames: usize,
    pub nrmse_percent: f64,
    pub auc_percent: f64,
    pub failure_rate_percent: f64,
    pub stability_nrmse_percent: f64,
    pub per_landmark_magnitude: Vec<f64>,
    pub per_landmark_orientation_deg: Vec<f64>,
    pub lag_frames: f64,
}

/// One row of the per-frame table.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub video_id: String,
    pub frame: usize,
    pub nrmse: f64,
    /// Absent for the first frame of each video.
    pub stability: Option<f64>,
}

/// Pools metrics across videos; each video is normalized by its own
/// `norm_distance`.
pub fn evaluate(
    method: &str,
    x_seqs: &[TrajectorySequence],
    p_seqs: &[TrajectorySequence],
    threshold: f64,
) -> Result<(MetricsReport, Vec<FrameMetrics>)> {
    if x_seqs.len() != p_seqs.len() {
        return Err(Error::Shape(format!(
            "{} outputs for {} ground-truth videos",
            x_seqs.len(),
            p_seqs.len()
        )));
    }
    if p_seqs.is_empty() {
        return Err(Error::InsufficientData("no videos to evaluate".into()));
    }
    let m = p_seqs[0].num_landmarks();
    let mut per_frame = Vec::new();
    let mut errors = Vec::new();
    let mut stability = Vec::new();
    let mut sums = DecompositionSums::new(m);
    let mut lags = Vec::new();
    for (x, p) in x_seqs.iter().zip(p_seqs) {
        if p.num_landmarks() != m {
            return Err(Error::Shape(format!(
                "video {} has {} landmarks, expected {m}",
                p.video_id,
                p.num_landmarks()
            )));
        }
        let e = per_frame_nrmse(x, p, p.norm_distance)?;
        let s = if p.len() >= 2 {
            per_frame_stability(x, p, p.norm_distance)?
        } else {
            Vec::new()
        };
        for (t, &et) in e.iter().enumerate() {
            per_frame.push(FrameMetrics {
                video_id: p.video_id.clone(),
                frame: t,
                nrmse: et,
                stability: t.checked_sub(1).map(|i| s[i]),
            });
        }
        errors.extend_from_slice(&e);
        stability.extend_from_slice(&s);
        sums.add(x, p);
        if p.len() >= 8 {
            lags.push(lag_estimate(x, p)?);
        }
    }
    let (auc, failure) = ced_auc_failure(&errors, threshold)?;
    let (magnitude, orientation) = sums.finish();
    Ok((
        MetricsReport {
            method: method.to_string(),
            num_videos: p_seqs.len(),
            num_frames: errors.len(),
            nrmse_percent: mean(&errors),
            auc_percent: auc,
            failure_rate_percent: failure,
            stability_nrmse_percent: mean(&stability),
            per_landmark_magnitude: magnitude,
            per_landmark_orientation_deg: orientation,
            lag_frames: mean(&lags),
        },
        per_frame,
    ))
}

/// Renders per-frame rows as CSV with a header.
pub fn frame_metrics_csv(rows: &[FrameMetrics]) -> String {
    let mut out = String::from("video_id,frame,nrmse,stability_nrmse\n");
    for r in rows {
        let s = r.stability.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.video_id, r.frame, r.nrmse, s));
    }
    out
}
