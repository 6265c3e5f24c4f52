use super::eigen::Eigenbasis;
use super::params::{StabilizerParams, COVARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;

/// Per-video accumulators for the exponentially weighted prior.
///
/// With `tau` counting back from the current frame, the prior at frame `t`
/// uses past outputs `x^(t - tau)` with weight `gamma^tau`, `tau >= 1`. All
/// sums are updated in O(2M) per frame:
///
/// * `weight_sum  <- gamma * (1 + weight_sum)`
/// * `first_moment <- gamma * (x + first_moment)`
/// * `second_moment <- gamma * ((V x - r)^2 + second_moment)` (elementwise)
///
/// where `r` is the rotated first output, used as a shift so the variance
/// does not cancel against large absolute coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    /// 1-based index of the next frame to be processed.
    pub t: usize,
    pub weight_sum: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    reference: Vec<f64>,
    pub last_output: Option<LandmarkSet>,
}

/// Prior moments for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMoments {
    /// Shared weighted mean, image coordinates.
    pub mu: Vec<f64>,
    /// The same mean rotated into the eigenbasis.
    pub mu_rotated: Vec<f64>,
    /// Per-component diagonal covariance in the eigenbasis.
    pub sigma_diag: Vec<Vec<f64>>,
}

impl StreamState {
    pub fn new(dim: usize) -> Self {
        Self {
            t: 1,
            weight_sum: 0.0,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            reference: Vec::new(),
            last_output: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }

    pub fn has_prior(&self) -> bool {
        self.t >= 2 && self.weight_sum > 0.0
    }

    /// Folds a new output into the accumulators. On error the state is left
    /// untouched.
    pub fn update(&mut self, x_new: &LandmarkSet, gamma: f64, basis: &Eigenbasis) -> Result<()> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParams(format!("gamma must be in (0, 1], got {gamma}")));
        }
        if x_new.dim() != self.dim() || basis.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "state has dimension {}, got landmarks {} and basis {}",
                self.dim(),
                x_new.dim(),
                basis.dim()
            )));
        }
        if !x_new.is_finite() {
            return Err(Error::NonFinite(format!("output at frame {}", self.t)));
        }
        let y = basis.rotate(x_new.as_slice());
        if self.reference.is_empty() {
            self.reference = y.clone();
        }
        self.weight_sum = gamma * (1.0 + self.weight_sum);
        for (m, x) in self.first_moment.iter_mut().zip(x_new.as_slice()) {
            *m = gamma * (x + *m);
        }
        for ((s, yi), r) in self.second_moment.iter_mut().zip(&y).zip(&self.reference) {
            let d = yi - r;
            *s = gamma * (d * d + *s);
        }
        self.t += 1;
        self.last_output = Some(x_new.clone());
        Ok(())
    }

    /// Weighted mean of past outputs, image coordinates.
    pub fn mean(&self) -> Result<Vec<f64>> {
        if !self.has_prior() {
            return Err(Error::NoPrior { t: self.t });
        }
        Ok(self.first_moment.iter().map(|m| m / self.weight_sum).collect())
    }

    /// Diagonal of the weighted empirical covariance of past outputs, in
    /// the eigenbasis.
    pub fn empirical_diag(&self, basis: &Eigenbasis) -> Result<Vec<f64>> {
        let mu = self.mean()?;
        let mu_rot = basis.rotate(&mu);
        Ok(self
            .second_moment
            .iter()
            .zip(&mu_rot)
            .zip(&self.reference)
            .map(|((s, m), r)| {
                let d = m - r;
                (s / self.weight_sum - d * d).max(0.0)
            })
            .collect())
    }

    /// Prior mean and blended per-component covariances for the next frame.
    pub fn prior_moments(&self, params: &StabilizerParams) -> Result<PriorMoments> {
        let basis = &params.basis;
        let mu = self.mean()?;
        let mu_rotated = basis.rotate(&mu);
        let empirical = self.empirical_diag(basis)?;
        let sigma_diag = params
            .beta
            .iter()
            .zip(&params.gamma_k)
            .map(|(&beta, g)| {
                g.iter()
                    .zip(&empirical)
                    .map(|(gi, ei)| (beta * gi + (1.0 - beta) * ei).max(COVARIANCE_FLOOR))
                    .collect()
            })
            .collect();
        Ok(PriorMoments {
            mu,
            mu_rotated,
            sigma_diag,
        })
    }
}

/// Functional form of [`StreamState::update`].
pub fn prior_update(
    state: &StreamState,
    x_new: &LandmarkSet,
    gamma: f64,
    basis: &Eigenbasis,
) -> Result<StreamState> {
    let mut next = state.clone();
    next.update(x_new, gamma, basis)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(v: &[f64]) -> LandmarkSet {
        LandmarkSet::from_flat(v.to_vec()).unwrap()
    }

    #[test]
    fn constant_history() {
        let basis = Eigenbasis::identity(2);
        let mut s = StreamState::new(2);
        for _ in 0..10 {
            s.update(&lm(&[512.25, 300.5]), 0.5, &basis).unwrap();
        }
        let mu = s.mean().unwrap();
        assert!((mu[0] - 512.25).abs() < 1e-12 && (mu[1] - 300.5).abs() < 1e-12);
        assert_eq!(s.empirical_diag(&basis).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn equal_weights_when_gamma_one() {
        let basis = Eigenbasis::identity(2);
        let mut s = StreamState::new(2);
        s.update(&lm(&[1.0, 2.0]), 1.0, &basis).unwrap();
        s.update(&lm(&[3.0, 6.0]), 1.0, &basis).unwrap();
        assert_eq!(s.mean().unwrap(), vec![2.0, 4.0]);
        assert_eq!(s.empirical_diag(&basis).unwrap(), vec![1.0, 4.0]);
    }

    #[test]
    fn weight_sum_zero_only_before_first_frame() {
        let basis = Eigenbasis::identity(2);
        let mut s = StreamState::new(2);
        assert_eq!(s.weight_sum, 0.0);
        assert!(matches!(s.mean(), Err(Error::NoPrior { t: 1 })));
        s.update(&lm(&[1.0, 2.0]), 0.3, &basis).unwrap();
        assert_eq!(s.t, 2);
        assert!(s.weight_sum > 0.0);
    }

    #[test]
    fn non_finite_leaves_state_unchanged() {
        let basis = Eigenbasis::identity(2);
        let mut s = StreamState::new(2);
        s.update(&lm(&[1.0, 2.0]), 0.5, &basis).unwrap();
        let before = s.clone();
        assert!(s.update(&lm(&[f64::NAN, 2.0]), 0.5, &basis).is_err());
        assert_eq!(s, before);
        assert!(s.update(&lm(&[1.0, 2.0]), 0.0, &basis).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn footprint_fixed() {
        let basis = Eigenbasis::identity(4);
        let mut s = StreamState::new(4);
        for t in 0..10_000 {
            let v = t as f64;
            s.update(&lm(&[v, -v, 0.5 * v, 1.0]), 0.9, &basis).unwrap();
            assert_eq!(s.first_moment.len(), 4);
            assert_eq!(s.second_moment.len(), 4);
        }
        assert!(s.weight_sum.is_finite());
    }
}
