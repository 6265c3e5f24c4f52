//! Smooth map between constrained stabilizer parameters and an
//! unconstrained vector for the simplex search.
//!
//! Layout: `[logit gamma, alpha logits (K-1, last fixed at 0), logit beta_k
//! (K), softplus^-1 noise groups (G), softplus^-1 prior groups (K * G)]`.
//! The eigenbasis and mode are carried over unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stabilizer::{StabilizerParams, COVARIANCE_FLOOR};

const UNIT_EPS: f64 = 1e-12;

/// How diagonal entries share free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "groups")]
pub enum Tying {
    /// One parameter per diagonal entry.
    Untied,
    /// Entries split into this many contiguous groups along the
    /// eigen-spectrum (largest eigenvalues first).
    Grouped(usize),
}

impl Default for Tying {
    fn default() -> Self {
        Tying::Grouped(4)
    }
}

impl Tying {
    pub fn num_groups(&self, dim: usize) -> usize {
        match *self {
            Tying::Untied => dim,
            Tying::Grouped(g) => g.clamp(1, dim),
        }
    }

    /// Group index of each diagonal entry.
    pub fn assignment(&self, dim: usize) -> Vec<usize> {
        let g = self.num_groups(dim);
        (0..dim).map(|i| i * g / dim).collect()
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(UNIT_EPS, 1.0 - UNIT_EPS);
    (p / (1.0 - p)).ln()
}

pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub fn softplus_inv(v: f64) -> f64 {
    let v = v.max(UNIT_EPS);
    if v > 30.0 {
        v + (-(-v).exp()).ln_1p()
    } else {
        v.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reparam {
    pub num_components: usize,
    pub dim: usize,
    pub tying: Tying,
}

impl Reparam {
    pub fn new(num_components: usize, dim: usize, tying: Tying) -> Self {
        Self {
            num_components,
            dim,
            tying,
        }
    }

    pub fn len(&self) -> usize {
        let k = self.num_components;
        1 + (k - 1) + k + (k + 1) * self.tying.num_groups(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn pack_diag(&self, diag: &[f64], out: &mut Vec<f64>) {
        let groups = self.tying.num_groups(self.dim);
        let assign = self.tying.assignment(self.dim);
        let mut sum = vec![0.0; groups];
        let mut count = vec![0usize; groups];
        for (v, &g) in diag.iter().zip(&assign) {
            sum[g] += v;
            count[g] += 1;
        }
        out.extend(sum.iter().zip(&count).map(|(s, &c)| softplus_inv(s / c as f64)));
    }

    fn unpack_diag(&self, u: &[f64]) -> Vec<f64> {
        self.tying
            .assignment(self.dim)
            .iter()
            .map(|&g| softplus(u[g]).max(COVARIANCE_FLOOR))
            .collect()
    }

    /// Constrained parameters to a free vector. Grouped diagonals are
    /// averaged within each group.
    pub fn unconstrain(&self, p: &StabilizerParams) -> Result<Vec<f64>> {
        if p.num_components() != self.num_components || p.dim() != self.dim {
            return Err(Error::Shape(format!(
                "expected K = {}, dim = {}; got K = {}, dim = {}",
                self.num_components,
                self.dim,
                p.num_components(),
                p.dim()
            )));
        }
        let k = self.num_components;
        let mut out = Vec::with_capacity(self.len());
        out.push(logit(p.gamma));
        let last = p.alpha[k - 1].max(UNIT_EPS).ln();
        out.extend(p.alpha[..k - 1].iter().map(|a| a.max(UNIT_EPS).ln() - last));
        out.extend(p.beta.iter().map(|&b| logit(b)));
        self.pack_diag(&p.gamma_noise, &mut out);
        for g in &p.gamma_k {
            self.pack_diag(g, &mut out);
        }
        Ok(out)
    }

    /// Free vector to constrained parameters, reusing `template`'s basis
    /// and mode.
    pub fn constrain(&self, u: &[f64], template: &StabilizerParams) -> Result<StabilizerParams> {
        if u.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} free parameters, got {}",
                self.len(),
                u.len()
            )));
        }
        let k = self.num_components;
        let groups = self.tying.num_groups(self.dim);
        let gamma = sigmoid(u[0]).max(UNIT_EPS);
        let logits: Vec<f64> = u[1..k].iter().copied().chain(std::iter::once(0.0)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let alpha = weights.iter().map(|w| w / total).collect();
        let beta = u[k..2 * k].iter().map(|&v| sigmoid(v)).collect();
        let mut offset = 2 * k;
        let gamma_noise = self.unpack_diag(&u[offset..offset + groups]);
        offset += groups;
        let gamma_k = (0..k)
            .map(|i| self.unpack_diag(&u[offset + i * groups..offset + (i + 1) * groups]))
            .collect();
        Ok(StabilizerParams {
            gamma,
            alpha,
            beta,
            gamma_noise,
            gamma_k,
            basis: template.basis.clone(),
            mode: template.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilizer::{Eigenbasis, MixtureMode};
    use proptest::prelude::*;

    fn params(gamma: f64, a0: f64, beta: [f64; 2], diags: [Vec<f64>; 3]) -> StabilizerParams {
        let [noise, g1, g2] = diags;
        StabilizerParams {
            gamma,
            alpha: vec![a0, 1.0 - a0],
            beta: beta.to_vec(),
            gamma_noise: noise,
            gamma_k: vec![g1, g2],
            basis: Eigenbasis::identity(4),
            mode: MixtureMode::MapCandidates,
        }
    }

    fn close(a: &StabilizerParams, b: &StabilizerParams, tol: f64) -> bool {
        let pairs = std::iter::once((a.gamma, b.gamma))
            .chain(a.alpha.iter().copied().zip(b.alpha.iter().copied()))
            .chain(a.beta.iter().copied().zip(b.beta.iter().copied()))
            .chain(a.gamma_noise.iter().copied().zip(b.gamma_noise.iter().copied()))
            .chain(
                a.gamma_k
                    .iter()
                    .flatten()
                    .copied()
                    .zip(b.gamma_k.iter().flatten().copied()),
            );
        pairs.into_iter().all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn grouping_layout() {
        assert_eq!(Tying::Grouped(4).assignment(14), vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3]);
        assert_eq!(Tying::Grouped(4).num_groups(2), 2);
        assert_eq!(Reparam::new(2, 14, Tying::Grouped(4)).len(), 1 + 1 + 2 + 12);
        assert_eq!(Reparam::new(2, 14, Tying::Untied).len(), 4 + 42);
    }

    #[test]
    fn softplus_inverse_pairs() {
        for v in [1e-8, 0.3, 1.0, 29.0, 31.0, 400.0] {
            assert!((softplus(softplus_inv(v)) - v).abs() <= 1e-10 * (1.0 + v), "{v}");
        }
    }

    proptest! {
        #[test]
        fn untied_round_trip(
            gamma in 0.001f64..0.999, a0 in 0.001f64..0.999,
            b0 in 0.001f64..0.999, b1 in 0.001f64..0.999,
            d in prop::collection::vec(1e-6f64..500.0, 12),
        ) {
            let p = params(gamma, a0, [b0, b1], [d[0..4].to_vec(), d[4..8].to_vec(), d[8..12].to_vec()]);
            let r = Reparam::new(2, 4, Tying::Untied);
            let back = r.constrain(&r.unconstrain(&p).unwrap(), &p).unwrap();
            prop_assert!(close(&back, &p, 1e-10));
        }

        #[test]
        fn grouped_round_trip_on_group_constant(
            gamma in 0.001f64..0.999, a0 in 0.001f64..0.999,
            g in prop::collection::vec(1e-6f64..500.0, 6),
        ) {
            let diag = |a: f64, b: f64| vec![a, a, b, b];
            let p = params(gamma, a0, [0.5, 0.25], [diag(g[0], g[1]), diag(g[2], g[3]), diag(g[4], g[5])]);
            let r = Reparam::new(2, 4, Tying::Grouped(2));
            let back = r.constrain(&r.unconstrain(&p).unwrap(), &p).unwrap();
            prop_assert!(close(&back, &p, 1e-10));
            back.validate().unwrap();
        }
    }
}
