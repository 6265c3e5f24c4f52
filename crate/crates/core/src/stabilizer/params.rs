use serde::{Deserialize, Serialize};

use super::eigen::Eigenbasis;
use crate::error::{Error, Result};

/// Lower bound applied to every model variance.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

/// How the output is picked from the posterior mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MixtureMode {
    /// Highest posterior density among the per-component posterior means.
    #[default]
    #[serde(rename = "map-candidates")]
    MapCandidates,
    /// Responsibility-weighted average of the per-component posterior means.
    #[serde(rename = "posterior-mean")]
    PosteriorMean,
}

/// Model parameters: decay, mixture weights and blends, and the diagonal
/// noise/prior covariances expressed in a fixed eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerParams {
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma_noise: Vec<f64>,
    pub gamma_k: Vec<Vec<f64>>,
    pub basis: Eigenbasis,
    pub mode: MixtureMode,
}

impl StabilizerParams {
    pub fn num_components(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn num_landmarks(&self) -> usize {
        self.dim() / 2
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alpha.len();
        let dim = self.dim();
        if k == 0 || self.beta.len() != k || self.gamma_k.len() != k {
            return Err(Error::InvalidParams(format!(
                "component counts disagree: alpha {}, beta {}, gamma_k {}",
                k,
                self.beta.len(),
                self.gamma_k.len()
            )));
        }
        if dim % 2 != 0
            || self.gamma_noise.len() != dim
            || self.gamma_k.iter().any(|g| g.len() != dim)
        {
            return Err(Error::InvalidParams(format!(
                "diagonals must have length {dim}"
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::InvalidParams("beta outside [0, 1]".into()));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidParams("negative mixture weight".into()));
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("mixture weights sum to {sum}")));
        }
        let diag_ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !diag_ok(&self.gamma_noise) || !self.gamma_k.iter().all(|g| diag_ok(g)) {
            return Err(Error::InvalidParams(
                "diagonal entries must be finite and non-negative".into(),
            ));
        }
        let err = self.basis.orthonormality_error();
        if !(err <= 1e-8) {
            return Err(Error::InvalidParams(format!("basis not orthonormal ({err:e})")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk parameter document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma_noise_diag: Vec<f64>,
    pub gamma_k_diag: Vec<Vec<f64>>,
    /// Row-major `2M x 2M`, rows are eigenvectors.
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub mode: MixtureMode,
}

impl From<&StabilizerParams> for ParamsFile {
    fn from(p: &StabilizerParams) -> Self {
        Self {
            k: p.num_components(),
            m: p.num_landmarks(),
            gamma: p.gamma,
            alpha: p.alpha.clone(),
            beta: p.beta.clone(),
            gamma_noise_diag: p.gamma_noise.clone(),
            gamma_k_diag: p.gamma_k.clone(),
            v: p.basis.rows().to_vec(),
            mode: p.mode,
        }
    }
}

impl TryFrom<ParamsFile> for StabilizerParams {
    type Error = Error;

    fn try_from(f: ParamsFile) -> Result<Self> {
        if f.alpha.len() != f.k {
            return Err(Error::InvalidParams(format!(
                "K = {} but {} mixture weights",
                f.k,
                f.alpha.len()
            )));
        }
        let params = StabilizerParams {
            gamma: f.gamma,
            alpha: f.alpha,
            beta: f.beta,
            gamma_noise: f.gamma_noise_diag,
            gamma_k: f.gamma_k_diag,
            basis: Eigenbasis::from_rows(2 * f.m, f.v)?,
            mode: f.mode,
        };
        params.validate()?;
        Ok(params)
    }
}
