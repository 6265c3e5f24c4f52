use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::landmarks::TrajectorySequence;

/// Orthonormal `2M x 2M` basis whose rows are eigenvectors of the
/// frame-difference covariance, ordered by descending eigenvalue.
///
/// Model covariances are diagonal in this basis: `Sigma = V^T diag(g) V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    dim: usize,
    /// Row-major; row `i` is eigenvector `i`.
    rows: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl Eigenbasis {
    pub fn identity(dim: usize) -> Self {
        let mut rows = vec![0.0; dim * dim];
        for i in 0..dim {
            rows[i * dim + i] = 1.0;
        }
        Self {
            dim,
            rows,
            eigenvalues: vec![0.0; dim],
        }
    }

    /// Wraps a row-major matrix, checking `V V^T = I` within `1e-8`.
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != dim * dim || dim == 0 {
            return Err(Error::Shape(format!(
                "basis of dimension {dim} needs {} entries, got {}",
                dim * dim,
                rows.len()
            )));
        }
        let basis = Self {
            dim,
            rows,
            eigenvalues: vec![0.0; dim],
        };
        let err = basis.orthonormality_error();
        if !(err <= 1e-8) {
            return Err(Error::InvalidParams(format!(
                "basis is not orthonormal (max |V V^T - I| = {err:e})"
            )));
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Eigenvalues in row order (zeros when the basis was supplied directly).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let dot: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `V x`: coordinates of `x` along each eigenvector.
    pub fn rotate(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `V^T y`.
    pub fn unrotate(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &yi) in y.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += yi * v;
            }
        }
        out
    }
}

/// Covariance of all consecutive ground-truth differences, normalized by
/// the number of differences.
pub fn difference_covariance(training: &[TrajectorySequence]) -> Result<DMatrix<f64>> {
    let dim = training
        .iter()
        .find(|s| !s.is_empty())
        .map(|s| 2 * s.num_landmarks())
        .ok_or_else(|| Error::InsufficientData("no frames in training data".into()))?;
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    for seq in training {
        if !seq.is_empty() && 2 * seq.num_landmarks() != dim {
            return Err(Error::Shape(format!(
                "video {} has {} landmarks, expected {}",
                seq.video_id,
                seq.num_landmarks(),
                dim / 2
            )));
        }
        for pair in seq.frames.windows(2) {
            diffs.push(
                pair[1]
                    .as_slice()
                    .iter()
                    .zip(pair[0].as_slice())
                    .map(|(b, a)| b - a)
                    .collect(),
            );
        }
    }
    if diffs.is_empty() {
        return Err(Error::InsufficientData(
            "need at least one sequence with two frames".into(),
        ));
    }
    let n = diffs.len() as f64;
    let mut mean = vec![0.0; dim];
    for d in &diffs {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for d in &diffs {
        for i in 0..dim {
            let di = d[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (d[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Eigenbasis of the frame-difference covariance of the training videos.
///
/// Each eigenvector's largest-magnitude entry is made positive. Directions
/// with (numerically) zero variance are filled in from the identity by
/// Gram-Schmidt, so an all-zero covariance yields `V = I`.
pub fn build_eigenbasis(training: &[TrajectorySequence]) -> Result<Eigenbasis> {
    let cov = difference_covariance(training)?;
    Ok(eigenbasis_of(&cov))
}

pub fn eigenbasis_of(cov: &DMatrix<f64>) -> Eigenbasis {
    let dim = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = (top * 1e-12).max(1e-300);

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut values = Vec::with_capacity(dim);
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff {
            break;
        }
        vectors.push(eig.eigenvectors.column(k).iter().copied().collect());
        values.push(lambda);
    }
    // complete the null space from the identity
    for e in 0..dim {
        if vectors.len() == dim {
            break;
        }
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        for _ in 0..2 {
            for u in &vectors {
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            vectors.push(v);
            values.push(0.0);
        }
    }
    for v in &mut vectors {
        let (mut idx, mut best) = (0, -1.0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best + 1e-12 {
                best = x.abs();
                idx = i;
            }
        }
        if v[idx] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Eigenbasis {
        dim,
        rows: vectors.concat(),
        eigenvalues: values,
    }
}
