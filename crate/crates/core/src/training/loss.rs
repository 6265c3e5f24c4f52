use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::landmarks::{check_aligned, TrajectorySequence};
use crate::par;
use crate::stabilizer::{stabilize_sequence, StabilizerParams};

/// Ground-truth motions shorter than this (squared norm) carry no delay
/// information and are left out of the time-delay mean.
pub const MIN_MOTION_SQ: f64 = 1e-12;

/// Components of the training objective.
///
/// `total = reg_euclidean + lambda2 * reg_time_delay + lambda1 * tm_smooth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reg_euclidean: f64,
    pub reg_time_delay: f64,
    pub tm_smooth: f64,
    pub total: f64,
    /// Each video's share of `total`.
    pub per_video: Vec<f64>,
}

/// Raw per-video sums; means are taken only after pooling all videos.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VideoSums {
    pub sq_error: f64,
    pub frames: usize,
    pub delay: f64,
    pub delay_frames: usize,
    pub smooth: f64,
    pub smooth_frames: usize,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares coefficient of `r` along `v`, `v^+ r = v.r / |v|^2`, or
/// `None` when `v` is (numerically) zero.
pub fn delay_coefficient(v: &[f64], r: &[f64]) -> Option<f64> {
    let vv = dot(v, v);
    (vv >= MIN_MOTION_SQ).then(|| dot(v, r) / vv)
}

/// Minimizer of `|x_cur - q x_prev - (1 - q) x_next|^2 + lambda3 (q - 0.5)^2`.
///
/// With `d = x_prev - x_next` and `b = x_cur - x_next`,
/// `q = (d.b + lambda3 / 2) / (d.d + lambda3)`; a vanishing denominator
/// yields 0.5.
pub fn closed_form_q(x_prev: &[f64], x_cur: &[f64], x_next: &[f64], lambda3: f64) -> f64 {
    let d = sub(x_prev, x_next);
    let b = sub(x_cur, x_next);
    let denom = dot(&d, &d) + lambda3;
    if denom < 1e-12 {
        0.5
    } else {
        (dot(&d, &b) + 0.5 * lambda3) / denom
    }
}

/// The smoothness bracket at a given `q`.
pub fn smooth_term(x_prev: &[f64], x_cur: &[f64], x_next: &[f64], q: f64, lambda3: f64) -> f64 {
    let residual: f64 = x_cur
        .iter()
        .zip(x_prev)
        .zip(x_next)
        .map(|((c, p), n)| {
            let e = c - q * p - (1.0 - q) * n;
            e * e
        })
        .sum();
    residual + lambda3 * (q - 0.5) * (q - 0.5)
}

/// Sums for one video. `p_seq` may be `None` when only the smoothness
/// term is wanted.
pub fn video_sums(
    x_seq: &TrajectorySequence,
    p_seq: Option<&TrajectorySequence>,
    lambda3: f64,
) -> Result<VideoSums> {
    let mut s = VideoSums::default();
    if let Some(p_seq) = p_seq {
        check_aligned(x_seq, p_seq)?;
        for (t, (x, p)) in x_seq.frames.iter().zip(&p_seq.frames).enumerate() {
            let r = sub(x.as_slice(), p.as_slice());
            s.sq_error += dot(&r, &r);
            s.frames += 1;
            if t >= 1 {
                let v = sub(p.as_slice(), p_seq.frames[t - 1].as_slice());
                if let Some(c) = delay_coefficient(&v, &r) {
                    s.delay += c * c;
                    s.delay_frames += 1;
                }
            }
        }
    }
    for w in x_seq.frames.windows(3) {
        let (a, b, c) = (w[0].as_slice(), w[1].as_slice(), w[2].as_slice());
        let q = closed_form_q(a, b, c, lambda3);
        s.smooth += smooth_term(a, b, c, q, lambda3);
        s.smooth_frames += 1;
    }
    Ok(s)
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

fn check_paired(x_seqs: &[TrajectorySequence], p_seqs: &[TrajectorySequence]) -> Result<()> {
    if x_seqs.len() != p_seqs.len() {
        return Err(Error::Shape(format!(
            "{} estimated videos for {} ground-truth videos",
            x_seqs.len(),
            p_seqs.len()
        )));
    }
    Ok(())
}

/// Regularization terms: mean squared error over all frames, and mean
/// squared delay coefficient over frames `t >= 2` with non-zero
/// ground-truth motion.
pub fn loss_reg(x_seqs: &[TrajectorySequence], p_seqs: &[TrajectorySequence]) -> Result<(f64, f64)> {
    check_paired(x_seqs, p_seqs)?;
    let (mut sq, mut n, mut delay, mut nd) = (0.0, 0, 0.0, 0);
    for (x, p) in x_seqs.iter().zip(p_seqs) {
        let s = video_sums(x, Some(p), 0.0)?;
        sq += s.sq_error;
        n += s.frames;
        delay += s.delay;
        nd += s.delay_frames;
    }
    Ok((ratio(sq, n), ratio(delay, nd)))
}

/// Mean over interior frames of the smoothness bracket at the optimal `q`.
pub fn loss_tm(x_seqs: &[TrajectorySequence], lambda3: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0);
    for x in x_seqs {
        let s = video_sums(x, None, lambda3).expect("no ground truth to misalign");
        sum += s.smooth;
        n += s.smooth_frames;
    }
    ratio(sum, n)
}

/// Pools per-video sums into a breakdown.
pub fn combine_sums(sums: &[VideoSums], config: &TrainConfig) -> LossBreakdown {
    let n: usize = sums.iter().map(|s| s.frames).sum();
    let nd: usize = sums.iter().map(|s| s.delay_frames).sum();
    let nt: usize = sums.iter().map(|s| s.smooth_frames).sum();
    let reg_euclidean = ratio(sums.iter().map(|s| s.sq_error).sum(), n);
    let reg_time_delay = ratio(sums.iter().map(|s| s.delay).sum(), nd);
    let tm_smooth = ratio(sums.iter().map(|s| s.smooth).sum(), nt);
    let per_video = sums
        .iter()
        .map(|s| {
            ratio(s.sq_error, n)
                + config.lambda2 * ratio(s.delay, nd)
                + config.lambda1 * ratio(s.smooth, nt)
        })
        .collect();
    LossBreakdown {
        reg_euclidean,
        reg_time_delay,
        tm_smooth,
        total: reg_euclidean + config.lambda2 * reg_time_delay + config.lambda1 * tm_smooth,
        per_video,
    }
}

/// Stabilizes every training video with `params` and evaluates the
/// objective against ground truth. Videos are processed in parallel when
/// enabled; pooling is done in input order.
pub fn total_loss(
    params: &StabilizerParams,
    z_seqs: &[TrajectorySequence],
    p_seqs: &[TrajectorySequence],
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    check_paired(z_seqs, p_seqs)?;
    let pairs: Vec<(&TrajectorySequence, &TrajectorySequence)> = z_seqs.iter().zip(p_seqs).collect();
    let sums = par::try_map(&pairs, |(z, p)| {
        let x = stabilize_sequence(params, z)?;
        video_sums(&x, Some(p), config.lambda3)
    })?;
    Ok(combine_sums(&sums, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::LandmarkSet;

    fn seq(frames: &[Vec<f64>]) -> TrajectorySequence {
        TrajectorySequence::new(
            "v",
            1.0,
            [0.0, 0.0, 1e4, 1e4],
            frames
                .iter()
                .map(|f| LandmarkSet::from_flat(f.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_sequences_have_zero_reg() {
        let p = seq(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 1.0]]);
        assert_eq!(loss_reg(&[p.clone()], &[p]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn delayed_by_fraction() {
        let alpha = 0.3;
        let p: Vec<Vec<f64>> = (0..10)
            .map(|t| vec![(t * t) as f64 * 0.5, 3.0 * t as f64])
            .collect();
        let mut x = vec![p[0].clone()];
        for t in 1..10 {
            x.push(
                p[t - 1]
                    .iter()
                    .zip(&p[t])
                    .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                    .collect(),
            );
        }
        let (_, delay) = loss_reg(&[seq(&x)], &[seq(&p)]).unwrap();
        assert!((delay - 0.09).abs() < 1e-12, "{delay}");
    }

    #[test]
    fn perpendicular_offset_has_no_delay() {
        let p: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, 0.0]).collect();
        let x: Vec<Vec<f64>> = p.iter().map(|v| vec![v[0], v[1] + 2.0]).collect();
        let (e, d) = loss_reg(&[seq(&x)], &[seq(&p)]).unwrap();
        assert!((e - 4.0).abs() < 1e-12);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn static_ground_truth_excluded_from_delay() {
        let p = seq(&vec![vec![1.0, 1.0]; 5]);
        let x = seq(&vec![vec![2.0, 1.0]; 5]);
        let (e, d) = loss_reg(&[x], &[p]).unwrap();
        assert_eq!((e, d), (1.0, 0.0));
    }

    #[test]
    fn misaligned_rejected() {
        let p = seq(&vec![vec![1.0, 1.0]; 5]);
        let x = seq(&vec![vec![1.0, 1.0]; 4]);
        assert!(matches!(loss_reg(&[x], &[p.clone()]), Err(Error::Shape(_))));
        assert!(loss_reg(&[], &[p]).is_err());
    }

    #[test]
    fn q_limits() {
        let (a, b, c) = ([0.0, 0.0], [0.7, 1.3], [2.0, 0.0]);
        assert!((closed_form_q(&a, &b, &c, 1e12) - 0.5).abs() < 1e-6);
        // b on the segment at parameter q0: b = q0 a + (1 - q0) c
        let q0 = 0.23;
        let on = [q0 * a[0] + (1.0 - q0) * c[0], q0 * a[1] + (1.0 - q0) * c[1]];
        assert!((closed_form_q(&a, &on, &c, 0.0) - q0).abs() < 1e-15);
        assert_eq!(closed_form_q(&[1.0, 1.0], &[5.0, 2.0], &[1.0, 1.0], 0.0), 0.5);
    }

    #[test]
    fn tm_examples() {
        let line = seq(&(0..8).map(|t| vec![2.0 * t as f64, -t as f64]).collect::<Vec<_>>());
        assert!(loss_tm(&[line], 1.0).abs() < 1e-20);
        let h = 0.75;
        let bent = seq(&[vec![0.0, 0.0], vec![1.0, h], vec![2.0, 0.0]]);
        assert!((loss_tm(&[bent], 1e12) - h * h).abs() < 1e-6);
        // shorter than three frames contributes nothing
        assert_eq!(loss_tm(&[seq(&[vec![0.0, 0.0], vec![1.0, 1.0]])], 1.0), 0.0);
    }
}
