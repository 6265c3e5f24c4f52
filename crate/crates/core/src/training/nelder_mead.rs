//! Derivative-free simplex minimization (Nelder-Mead).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    pub max_evals: usize,
    /// Simplex spread in parameter space (infinity norm around the best vertex).
    pub x_tol: f64,
    /// Spread of objective values across the simplex.
    pub f_tol: f64,
    /// Per-coordinate initial steps; `None` uses 5% of each non-zero
    /// coordinate and 0.00025 for zeros.
    pub initial_steps: Option<Vec<f64>>,
    /// Number of times a fresh simplex is built around the best point after
    /// a run ends; stops early once a restart gains less than `f_tol`.
    /// `max_iters` and `max_evals` cover all runs together.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            max_evals: 20_000,
            x_tol: 1e-8,
            f_tol: 1e-10,
            initial_steps: None,
            restarts: 0,
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    MaxEvals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub termination: Termination,
    /// Best objective value after initialization and after each iteration.
    pub history: Vec<f64>,
}

fn evaluate<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], evals: &mut usize) -> f64 {
    *evals += 1;
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn minimize<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_observed(f, x0, opts, |_, _, _| {})
}

/// Like [`minimize`], calling `observe(iteration, best_x, best_f)` after
/// every iteration. Non-finite objective values are treated as `+inf`.
pub fn minimize_observed<F, O>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
    mut observe: O,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    let n = x0.len();
    let mut evals = 0;
    let mut iters = 0;
    let mut start = x0.to_vec();
    let mut history = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut round = 0;
    let termination = loop {
        let (x, fx, termination) = run(
            &mut f,
            &start,
            opts,
            &mut evals,
            &mut iters,
            &mut history,
            &mut observe,
        );
        let gain = best.as_ref().map_or(f64::INFINITY, |(_, b)| b - fx);
        if best.as_ref().is_none_or(|(_, b)| fx < *b) {
            best = Some((x.clone(), fx));
        }
        round += 1;
        if round > opts.restarts
            || n == 0
            || gain < opts.f_tol
            || termination != Termination::Converged && round > 1 && gain <= 0.0
            || iters >= opts.max_iters
            || evals >= opts.max_evals
        {
            break termination;
        }
        start = best.as_ref().map(|(x, _)| x.clone()).unwrap_or(x);
    };
    let (x, fx) = best.expect("at least one run");
    NelderMeadResult {
        x,
        f: fx,
        iters,
        evals,
        termination,
        history,
    }
}

#[allow(clippy::too_many_arguments)]
fn run<F, O>(
    f: &mut F,
    x0: &[f64],
    opts: &NelderMeadOptions,
    evals: &mut usize,
    iters: &mut usize,
    history: &mut Vec<f64>,
    observe: &mut O,
) -> (Vec<f64>, f64, Termination)
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = match &opts.initial_steps {
            Some(steps) => steps[i],
            None if x0[i] != 0.0 => 0.05 * x0[i],
            None => 0.00025,
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| evaluate(f, v, evals)).collect();

    let sort = |simplex: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };
    sort(&mut simplex, &mut values);
    let prev = history.last().copied().unwrap_or(f64::INFINITY);
    history.push(values[0].min(prev));

    let termination = loop {
        if n == 0 {
            break Termination::Converged;
        }
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let f_spread = values[1..]
            .iter()
            .map(|v| (v - values[0]).abs())
            .fold(0.0f64, f64::max);
        if x_spread <= opts.x_tol && f_spread <= opts.f_tol {
            break Termination::Converged;
        }
        if *iters >= opts.max_iters {
            break Termination::MaxIters;
        }
        if *evals >= opts.max_evals {
            break Termination::MaxEvals;
        }
        *iters += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -REFLECT);
        let fr = evaluate(f, &reflected, evals);

        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -REFLECT * EXPAND);
            let fe = evaluate(f, &expanded, evals);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (candidate, fc) = if fr < values[n] {
                let outside = lerp(&centroid, &worst, -REFLECT * CONTRACT);
                let fc = evaluate(f, &outside, evals);
                (outside, fc)
            } else {
                let inside = lerp(&centroid, &worst, CONTRACT);
                let fc = evaluate(f, &inside, evals);
                (inside, fc)
            };
            if fc < fr.min(values[n]) {
                simplex[n] = candidate;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = lerp(&best, &simplex[i], SHRINK);
                    values[i] = evaluate(f, &simplex[i], evals);
                }
            }
        }
        sort(&mut simplex, &mut values);
        let prev = history.last().copied().unwrap_or(f64::INFINITY);
        let best = values[0].min(prev);
        history.push(best);
        observe(*iters, &simplex[0], best);
    };
    (simplex[0].clone(), values[0], termination)
}
#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn rosenbrock_minimum() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert_eq!(r.termination, Termination::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.evals <= 5000);
    }

    #[test]
    fn history_non_increasing() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.history.len(), r.iters + 1);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 0.2).powi(2) + x[1] * x[1] };
        let r = minimize(f, &[0.0, 1.0], &NelderMeadOptions { initial_steps: Some(vec![0.3, 0.3]), ..Default::default() });
        assert!(r.f.is_finite());
        assert!((r.x[0] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn single_iteration_budget() {
        let opts = NelderMeadOptions { max_iters: 1, ..Default::default() };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &opts);
        assert_eq!(r.iters, 1);
        assert_eq!(r.termination, Termination::MaxIters);
    }

    #[test]
    fn quadratic_bowl_in_five_dims() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - i as f64).powi(2)).sum();
        let r = minimize(f, &[1.0; 5], &NelderMeadOptions { initial_steps: Some(vec![0.5; 5]), ..Default::default() });
        for (i, v) in r.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn restarts_share_budget_and_keep_history_monotone() {
        let opts = NelderMeadOptions { restarts: 3, max_iters: 200, ..Default::default() };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(r.iters <= 200);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        let single = minimize(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions { max_iters: 200, ..Default::default() });
        assert!(r.f <= single.f);
    }

    #[test]
    fn restart_stops_when_nothing_gained() {
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let opts = NelderMeadOptions { restarts: 10, ..Default::default() };
        let r = minimize(f, &[1.0, 1.0], &opts);
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.f < 1e-10);
        assert!(r.evals < 2000);
    }
}
