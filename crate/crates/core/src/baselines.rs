//! Reference smoothers: moving average, first-order exponential, Holt
//! double exponential, and constant-velocity blending.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{LandmarkSet, TrajectorySequence};
use crate::par;

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "param")]
pub enum BaselineKind {
    MovingAverage(usize),
    /// `x_t = a z_t + (1 - a) x_{t-1}`.
    FirstOrder(f64),
    /// Level and trend both smoothed with coefficient `a`.
    SecondOrder(f64),
    /// `x_t = b z_t + (1 - b) (2 x_{t-1} - x_{t-2})`.
    ConstantSpeed(f64),
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::MovingAverage(w) if w == 0 => {
                Err(Error::Config("moving average window must be >= 1".into()))
            }
            BaselineKind::FirstOrder(a) | BaselineKind::SecondOrder(a) | BaselineKind::ConstantSpeed(a)
                if !(a > 0.0 && a <= 1.0) =>
            {
                Err(Error::Config(format!("coefficient {a} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// The four smoothers with their default settings.
    pub fn defaults() -> [BaselineKind; 4] {
        [
            BaselineKind::MovingAverage(DEFAULT_WINDOW),
            BaselineKind::FirstOrder(DEFAULT_COEFFICIENT),
            BaselineKind::SecondOrder(DEFAULT_COEFFICIENT),
            BaselineKind::ConstantSpeed(DEFAULT_COEFFICIENT),
        ]
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::MovingAverage(w) => write!(f, "moving_average:{w}"),
            BaselineKind::FirstOrder(a) => write!(f, "first_order:{a}"),
            BaselineKind::SecondOrder(a) => write!(f, "second_order:{a}"),
            BaselineKind::ConstantSpeed(a) => write!(f, "constant_speed:{a}"),
        }
    }
}

/// Parses `kind[:param]`.
impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let coef = |p: Option<&str>| -> Result<f64> {
            p.map_or(Ok(DEFAULT_COEFFICIENT), |p| {
                p.parse()
                    .map_err(|_| Error::Config(format!("bad baseline parameter {p:?}")))
            })
        };
        let kind = match name {
            "moving_average" => BaselineKind::MovingAverage(match param {
                Some(p) => p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad window {p:?}")))?,
                None => DEFAULT_WINDOW,
            }),
            "first_order" => BaselineKind::FirstOrder(coef(param)?),
            "second_order" => BaselineKind::SecondOrder(coef(param)?),
            "constant_speed" => BaselineKind::ConstantSpeed(coef(param)?),
            other => return Err(Error::Config(format!("unknown baseline {other:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

fn combine(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

/// Runs a baseline smoother causally over one sequence.
pub fn apply_baseline(kind: BaselineKind, z_seq: &TrajectorySequence) -> Result<TrajectorySequence> {
    kind.validate()?;
    if z_seq.is_empty() {
        return Err(Error::InsufficientData(format!(
            "video {} has no frames",
            z_seq.video_id
        )));
    }
    let z: Vec<&[f64]> = z_seq.frames.iter().map(LandmarkSet::as_slice).collect();
    let dim = z[0].len();
    let out: Vec<Vec<f64>> = match kind {
        BaselineKind::MovingAverage(window) => (0..z.len())
            .map(|t| {
                let recent = &z[(t + 1).saturating_sub(window)..=t];
                let n = recent.len() as f64;
                (0..dim)
                    .map(|i| recent.iter().map(|f| f[i]).sum::<f64>() / n)
                    .collect()
            })
            .collect(),
        BaselineKind::FirstOrder(a) => {
            let mut out: Vec<Vec<f64>> = vec![z[0].to_vec()];
            for zt in &z[1..] {
                let prev = out.last().unwrap();
                let next = combine(zt, a, prev, 1.0 - a);
                out.push(next);
            }
            out
        }
        BaselineKind::SecondOrder(a) => {
            let mut level = z[0].to_vec();
            let mut trend = vec![0.0; dim];
            let mut out = vec![level.clone()];
            for zt in &z[1..] {
                let predicted: Vec<f64> = level.iter().zip(&trend).map(|(l, t)| l + t).collect();
                let new_level = combine(zt, a, &predicted, 1.0 - a);
                let step: Vec<f64> = new_level.iter().zip(&level).map(|(n, l)| n - l).collect();
                trend = combine(&step, a, &trend, 1.0 - a);
                level = new_level;
                out.push(level.clone());
            }
            out
        }
        BaselineKind::ConstantSpeed(b) => {
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(z.len());
            for (t, zt) in z.iter().enumerate() {
                let next = match t {
                    0 => zt.to_vec(),
                    1 => combine(zt, b, &out[0], 1.0 - b),
                    _ => {
                        let prediction: Vec<f64> = out[t - 1]
                            .iter()
                            .zip(&out[t - 2])
                            .map(|(p, pp)| 2.0 * p - pp)
                            .collect();
                        combine(zt, b, &prediction, 1.0 - b)
                    }
                };
                out.push(next);
            }
            out
        }
    };
    let frames = out
        .into_iter()
        .map(LandmarkSet::from_flat)
        .collect::<Result<Vec<_>>>()?;
    Ok(z_seq.with_frames(frames))
}

pub fn apply_baseline_batch(
    kind: BaselineKind,
    z_seqs: &[TrajectorySequence],
) -> Result<Vec<TrajectorySequence>> {
    par::try_map(z_seqs, |s| apply_baseline(kind, s))
}
