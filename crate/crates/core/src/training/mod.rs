//! Estimation of stabilizer parameters from detector/ground-truth pairs.
//!
//! The objective combines a regression term (squared error plus a penalty on
//! the component of the error along the ground-truth motion, which measures
//! time delay) with a smoothness term that compares each output to the
//! segment between its neighbours. Parameters are searched with Nelder-Mead
//! over a smooth unconstrained reparameterization; the eigenbasis stays fixed.

mod loss;
pub mod nelder_mead;
mod reparam;

pub use loss::{
    closed_form_q, combine_sums, delay_coefficient, loss_reg, loss_tm, smooth_term, total_loss,
    video_sums, LossBreakdown, VideoSums, MIN_MOTION_SQ,
};
pub use nelder_mead::{NelderMeadOptions, NelderMeadResult, Termination};
pub use reparam::{logit, sigmoid, softplus, softplus_inv, Reparam, Tying};

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{check_aligned, TrajectorySequence};
use crate::stabilizer::{build_eigenbasis, MixtureMode, StabilizerParams, COVARIANCE_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub max_iters: usize,
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    /// Initial simplex step in the unconstrained space.
    pub initial_step: f64,
    /// Fresh simplices built around the best point once a run stalls.
    pub restarts: usize,
    pub tying: Tying,
    pub mode: MixtureMode,
    /// Recorded with every run; the search itself is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 1.0,
            max_iters: 1500,
            max_evals: 4000,
            x_tol: 1e-4,
            f_tol: 1e-6,
            initial_step: 0.5,
            restarts: 6,
            tying: Tying::default(),
            mode: MixtureMode::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if !(self.x_tol > 0.0 && self.f_tol > 0.0) {
            return Err(Error::Config("tolerances must be > 0".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial_step must be > 0".into()));
        }
        if let Tying::Grouped(0) = self.tying {
            return Err(Error::Config("need at least one group".into()));
        }
        Ok(())
    }
}

fn check_training_pairs(z_seqs: &[TrajectorySequence], p_seqs: &[TrajectorySequence]) -> Result<()> {
    if p_seqs.is_empty() {
        return Err(Error::InsufficientData("no ground-truth videos".into()));
    }
    if z_seqs.len() != p_seqs.len() {
        return Err(Error::InsufficientData(format!(
            "{} detector videos but {} ground-truth videos",
            z_seqs.len(),
            p_seqs.len()
        )));
    }
    for (z, p) in z_seqs.iter().zip(p_seqs) {
        check_aligned(z, p)?;
    }
    Ok(())
}

/// Average per-coordinate variance of `z - p`, pooled over all frames of all
/// videos.
pub fn residual_variance(z_seqs: &[TrajectorySequence], p_seqs: &[TrajectorySequence]) -> Result<f64> {
    check_training_pairs(z_seqs, p_seqs)?;
    let dim = 2 * p_seqs[0].num_landmarks();
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut n = 0usize;
    for (z, p) in z_seqs.iter().zip(p_seqs) {
        if 2 * p.num_landmarks() != dim {
            return Err(Error::Shape(format!("video {} has a different landmark count", p.video_id)));
        }
        for (zf, pf) in z.frames.iter().zip(&p.frames) {
            for (i, (a, b)) in zf.as_slice().iter().zip(pf.as_slice()).enumerate() {
                let r = a - b;
                sum[i] += r;
                sq[i] += r * r;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no frames".into()));
    }
    let n = n as f64;
    let var: f64 = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| (q / n - (s / n).powi(2)).max(0.0))
        .sum();
    Ok(var / dim as f64)
}

/// Starting point for training: noise `rho I`, a near-delta first component,
/// a broad second component (`10 rho I`), `gamma = beta = 0.5`, uniform
/// mixture weights, and the eigenbasis of ground-truth motion.
pub fn init_params(z_seqs: &[TrajectorySequence], p_seqs: &[TrajectorySequence]) -> Result<StabilizerParams> {
    let rho = residual_variance(z_seqs, p_seqs)?;
    let basis = build_eigenbasis(p_seqs)?;
    let dim = basis.dim();
    let floor = |v: f64| v.max(COVARIANCE_FLOOR);
    Ok(StabilizerParams {
        gamma: 0.5,
        alpha: vec![0.5, 0.5],
        beta: vec![0.5, 0.5],
        gamma_noise: vec![floor(rho); dim],
        gamma_k: vec![vec![COVARIANCE_FLOOR; dim], vec![floor(10.0 * rho); dim]],
        basis,
        mode: MixtureMode::default(),
    })
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: StabilizerParams,
    pub loss: LossBreakdown,
    /// Best-so-far breakdown after initialization and after each iteration.
    pub history: Vec<LossBreakdown>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Minimizes [`total_loss`] starting from `params0`.
///
/// Never returns parameters scoring worse than `params0`.
pub fn fit(
    params0: &StabilizerParams,
    z_seqs: &[TrajectorySequence],
    p_seqs: &[TrajectorySequence],
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    params0.validate()?;
    check_training_pairs(z_seqs, p_seqs)?;
    let mut template = params0.clone();
    template.mode = config.mode;
    let reparam = Reparam::new(template.num_components(), template.dim(), config.tying);

    let initial_loss = total_loss(&template, z_seqs, p_seqs, config)?;
    let best: RefCell<(f64, LossBreakdown)> = RefCell::new((initial_loss.total, initial_loss.clone()));

    let objective = |u: &[f64]| -> f64 {
        let Ok(params) = reparam.constrain(u, &template) else {
            return f64::INFINITY;
        };
        match total_loss(&params, z_seqs, p_seqs, config) {
            Ok(b) if b.total.is_finite() => {
                let total = b.total;
                let mut best = best.borrow_mut();
                if total < best.0 {
                    *best = (total, b);
                }
                total
            }
            _ => f64::INFINITY,
        }
    };
    let mut history = vec![initial_loss.clone()];
    let observe = |_: usize, _: &[f64], _: f64| history.push(best.borrow().1.clone());

    let u0 = reparam.unconstrain(&template)?;
    let opts = NelderMeadOptions {
        max_iters: config.max_iters,
        max_evals: config.max_evals,
        x_tol: config.x_tol,
        f_tol: config.f_tol,
        initial_steps: Some(vec![config.initial_step; u0.len()]),
        restarts: config.restarts,
    };
    let result = nelder_mead::minimize_observed(objective, &u0, &opts, observe);

    let candidate = reparam.constrain(&result.x, &template)?;
    let candidate_loss = total_loss(&candidate, z_seqs, p_seqs, config)?;
    let (params, loss) = if candidate_loss.total <= initial_loss.total {
        (candidate, candidate_loss)
    } else {
        (template, initial_loss)
    };
    Ok(FitResult {
        params,
        loss,
        history,
        iterations: result.iters,
        evaluations: result.evals + 2,
        termination: result.termination,
    })
}

/// `iter,euclidean,time_delay,tm,total` rows for a loss history.
pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("iter,euclidean,time_delay,tm,total\n");
    for (i, b) in history.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{}\n",
            b.reg_euclidean, b.reg_time_delay, b.tm_smooth, b.total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::LandmarkSet;

    fn seq(id: &str, frames: Vec<Vec<f64>>) -> TrajectorySequence {
        TrajectorySequence::new(
            id,
            100.0,
            [0.0, 0.0, 1e4, 1e4],
            frames.into_iter().map(|f| LandmarkSet::from_flat(f).unwrap()).collect(),
        )
        .unwrap()
    }

    fn wave(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| {
                let s = t as f64 * 0.2;
                vec![100.0 + 5.0 * s.sin(), 50.0 + t as f64 * 0.5]
            })
            .collect()
    }

    #[test]
    fn init_matches_recipe() {
        let p = seq("a", wave(40));
        let z = seq(
            "a",
            wave(40)
                .into_iter()
                .enumerate()
                .map(|(t, f)| vec![f[0] + if t % 2 == 0 { 2.0 } else { -2.0 }, f[1]])
                .collect(),
        );
        let params = init_params(&[z], &[p]).unwrap();
        // x residual alternates +-2 (variance 4), y residual 0 -> average 2
        assert!((params.gamma_noise[0] - 2.0).abs() < 1e-12);
        assert!((params.gamma_k[1][0] - 20.0).abs() < 1e-12);
        assert_eq!(params.gamma_k[0], vec![COVARIANCE_FLOOR; 2]);
        assert_eq!((params.gamma, params.alpha.clone(), params.beta.clone()), (0.5, vec![0.5, 0.5], vec![0.5, 0.5]));
        params.validate().unwrap();
    }

    #[test]
    fn init_on_exact_detector_floors_everything() {
        let p = seq("a", wave(10));
        let params = init_params(&[p.clone()], &[p]).unwrap();
        assert!(params.gamma_noise.iter().all(|&v| v == COVARIANCE_FLOOR));
        assert!(params.gamma_k.iter().flatten().all(|&v| v == COVARIANCE_FLOOR));
    }

    #[test]
    fn init_requires_ground_truth() {
        let p = seq("a", wave(10));
        assert!(init_params(&[p], &[]).is_err());
    }

    #[test]
    fn fit_history_monotone_and_not_worse() {
        let p = seq("a", wave(60));
        let z = seq(
            "a",
            wave(60)
                .into_iter()
                .enumerate()
                .map(|(t, f)| vec![f[0] + ((t * 7919) % 13) as f64 / 6.0 - 1.0, f[1] + ((t * 104_729) % 11) as f64 / 5.0 - 1.0])
                .collect(),
        );
        let params0 = init_params(&[z.clone()], &[p.clone()]).unwrap();
        let config = TrainConfig { max_iters: 40, ..Default::default() };
        let fit = fit(&params0, &[z.clone()], &[p.clone()], &config).unwrap();
        assert!(fit.history.windows(2).all(|w| w[1].total <= w[0].total));
        let l0 = total_loss(&params0, &[z.clone()], &[p.clone()], &config).unwrap().total;
        let l1 = total_loss(&fit.params, &[z], &[p], &config).unwrap().total;
        assert!(l1 <= l0);
        assert_eq!(fit.history.len(), fit.iterations + 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { lambda2: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { x_tol: 0.0, ..Default::default() }.validate().is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"lambda2": 0}"#).unwrap();
        assert_eq!((cfg.lambda1, cfg.lambda2, cfg.lambda3), (1.0, 0.0, 1.0));
    }
}
