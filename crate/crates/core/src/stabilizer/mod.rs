//! Streaming Bayesian landmark stabilizer.
//!
//! The prior over the current frame is a K-component Gaussian mixture with a
//! shared exponentially weighted mean of past outputs and per-component
//! covariances blending a learned diagonal with the weighted empirical
//! covariance. The detector output is a Gaussian observation of the true
//! landmarks. All covariances are diagonal in one fixed eigenbasis, so every
//! per-component posterior reduces to independent scalar updates.

mod eigen;
mod params;
mod state;

pub use eigen::{build_eigenbasis, difference_covariance, eigenbasis_of, Eigenbasis};
pub use params::{MixtureMode, ParamsFile, StabilizerParams, COVARIANCE_FLOOR};
pub use state::{prior_update, PriorMoments, StreamState};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::landmarks::{LandmarkSet, TrajectorySequence};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Component(usize),
    Blend,
}

/// Diagnostic record of how one frame's output was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDecision {
    /// Per-component posterior means, image coordinates.
    pub component_posterior_means: Vec<Vec<f64>>,
    /// `log alpha_k + log N(z; mu, Sigma_k + Sigma_noise)`.
    pub component_log_weights: Vec<f64>,
    pub chosen: Choice,
}

/// Output of one stabilization step. `decision` is `None` while no prior
/// exists and the observation is passed through.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub x: LandmarkSet,
    pub decision: Option<MixtureDecision>,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn noise_diag(params: &StabilizerParams) -> Vec<f64> {
    params
        .gamma_noise
        .iter()
        .map(|v| v.max(COVARIANCE_FLOOR))
        .collect()
}

/// Unnormalized log posterior density `log [prior(x) * likelihood(z | x)]`,
/// with every vector in the eigenbasis.
pub fn log_posterior_density(
    x: &[f64],
    z: &[f64],
    prior: &PriorMoments,
    params: &StabilizerParams,
) -> f64 {
    let noise = noise_diag(params);
    let per_component: Vec<f64> = params
        .alpha
        .iter()
        .zip(&prior.sigma_diag)
        .map(|(&a, s)| {
            a.ln()
                + x.iter()
                    .zip(&prior.mu_rotated)
                    .zip(s)
                    .map(|((&xi, &mi), &si)| log_normal(xi, mi, si))
                    .sum::<f64>()
        })
        .collect();
    let likelihood: f64 = z
        .iter()
        .zip(x)
        .zip(&noise)
        .map(|((&zi, &xi), &ni)| log_normal(zi, xi, ni))
        .sum();
    log_sum_exp(&per_component) + likelihood
}

impl StreamState {
    /// Stabilizes one detector frame and advances the state.
    pub fn step(&mut self, params: &StabilizerParams, z: &LandmarkSet) -> Result<FrameOutput> {
        if z.dim() != params.dim() || self.dim() != params.dim() {
            return Err(Error::Shape(format!(
                "observation has dimension {}, basis {}, state {}",
                z.dim(),
                params.dim(),
                self.dim()
            )));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite(format!("observation at frame {}", self.t)));
        }
        if !self.has_prior() {
            self.update(z, params.gamma, &params.basis)?;
            return Ok(FrameOutput {
                x: z.clone(),
                decision: None,
            });
        }

        let basis = &params.basis;
        let prior = self.prior_moments(params)?;
        let noise = noise_diag(params);
        let z_rot = basis.rotate(z.as_slice());

        let mut candidates = Vec::with_capacity(params.num_components());
        let mut log_weights = Vec::with_capacity(params.num_components());
        for (&a, s) in params.alpha.iter().zip(&prior.sigma_diag) {
            let mut mean = Vec::with_capacity(z_rot.len());
            let mut log_w = a.ln();
            for (((&zi, &mi), &si), &ni) in z_rot.iter().zip(&prior.mu_rotated).zip(s).zip(&noise) {
                mean.push((ni * mi + si * zi) / (si + ni));
                log_w += log_normal(zi, mi, si + ni);
            }
            candidates.push(mean);
            log_weights.push(log_w);
        }

        let (x_rot, chosen) = match params.mode {
            MixtureMode::MapCandidates => {
                let mut best = 0;
                let mut best_density = f64::NEG_INFINITY;
                for (k, c) in candidates.iter().enumerate() {
                    let d = log_posterior_density(c, &z_rot, &prior, params);
                    if d > best_density {
                        best_density = d;
                        best = k;
                    }
                }
                (candidates[best].clone(), Choice::Component(best))
            }
            MixtureMode::PosteriorMean => {
                let norm = log_sum_exp(&log_weights);
                let mut blended = vec![0.0; z_rot.len()];
                for (c, lw) in candidates.iter().zip(&log_weights) {
                    let r = (lw - norm).exp();
                    for (b, ci) in blended.iter_mut().zip(c) {
                        *b += r * ci;
                    }
                }
                (blended, Choice::Blend)
            }
        };

        let x = LandmarkSet::from_flat(basis.unrotate(&x_rot))?;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("stabilized output at frame {}", self.t)));
        }
        self.update(&x, params.gamma, basis)?;
        Ok(FrameOutput {
            x,
            decision: Some(MixtureDecision {
                component_posterior_means: candidates.iter().map(|c| basis.unrotate(c)).collect(),
                component_log_weights: log_weights,
                chosen,
            }),
        })
    }
}

/// Functional single step: returns the output, its decision, and the
/// successor state, leaving `state` untouched.
pub fn stabilize_frame(
    state: &StreamState,
    params: &StabilizerParams,
    z: &LandmarkSet,
) -> Result<(FrameOutput, StreamState)> {
    let mut next = state.clone();
    let out = next.step(params, z)?;
    Ok((out, next))
}

/// Causally stabilizes a whole detector sequence.
pub fn stabilize_sequence(
    params: &StabilizerParams,
    z_seq: &TrajectorySequence,
) -> Result<TrajectorySequence> {
    if z_seq.is_empty() {
        return Err(Error::InsufficientData(format!(
            "video {} has no frames",
            z_seq.video_id
        )));
    }
    let mut state = StreamState::new(params.dim());
    let frames = z_seq
        .frames
        .iter()
        .map(|z| state.step(params, z).map(|o| o.x))
        .collect::<Result<Vec<_>>>()?;
    Ok(z_seq.with_frames(frames))
}

/// Stabilizes independent videos, in parallel when enabled.
pub fn stabilize_batch(
    params: &StabilizerParams,
    z_seqs: &[TrajectorySequence],
) -> Result<Vec<TrajectorySequence>> {
    par::try_map(z_seqs, |s| stabilize_sequence(params, s))
}
