//! Bound-constrained limited-memory quasi-Newton minimization with
//! finite-difference gradients.
//!
//! Each iteration fixes the variables sitting on a bound whose gradient
//! points outward, builds a search direction for the remaining free
//! variables from the last `memory` curvature pairs (two-loop recursion),
//! and runs a projected backtracking line search. The projected-gradient
//! variant uses the same machinery with the identity as inverse Hessian.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    #[serde(rename = "l-bfgs-b")]
    LimitedMemory,
    ProjectedGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub method: Method,
    pub max_iterations: usize,
    pub memory: usize,
    /// Central-difference half-step, in the units of `x`.
    pub fd_step: f64,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub pg_tolerance: f64,
    /// Stop when the relative decrease of `f` drops below this.
    pub f_tolerance: f64,
    pub max_backtracks: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            method: Method::LimitedMemory,
            max_iterations: 1000,
            memory: 10,
            fd_step: 0.5,
            pg_tolerance: 1e-10,
            f_tolerance: 1e-12,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ProjectedGradient,
    FunctionTolerance,
    LineSearch,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64], lower: &[f64], upper: &[f64], h: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let hi = (x[i] + h).min(upper[i]);
                let lo = (x[i] - h).max(lower[i]);
                if hi <= lo {
                    return 0.0;
                }
                probe[i] = hi;
                let f_hi = self.eval(&probe);
                probe[i] = lo;
                let f_lo = self.eval(&probe);
                probe[i] = x[i];
                (f_hi - f_lo) / (hi - lo)
            })
            .collect()
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variables that may move: not pinned at a bound by an outward gradient.
fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
        .collect()
}

fn two_loop(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(&x, &f)| if f { x } else { 0.0 })
            .collect()
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    let mut usable = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        if sy <= 1e-16 {
            continue;
        }
        let rho = 1.0 / sy;
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push(a);
        usable.push((s, y, rho));
    }
    if let Some((s, y, _)) = usable.first() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in usable.iter().zip(&alphas).rev() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0` (projected
/// into the box first).
pub fn minimize<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &Options) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), lower.len());
    assert_eq!(x0.len(), upper.len());
    let mut fun = Counted { f, evaluations: 0 };
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut fx = fun.eval(&x);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut g = fun.gradient(&x, lower, upper, opts.fd_step);
    let mut iterations = 0;

    let termination = loop {
        let pg_norm = (0..x.len())
            .map(|i| ((x[i] - g[i]).clamp(lower[i], upper[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if pg_norm <= opts.pg_tolerance {
            break Termination::ProjectedGradient;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let free = free_mask(&x, &g, lower, upper);
        let steepest: Vec<f64> = g
            .iter()
            .zip(&free)
            .map(|(&gi, &fr)| if fr { -gi } else { 0.0 })
            .collect();
        let mut d = match opts.method {
            Method::LimitedMemory if !pairs.is_empty() => two_loop(&g, &free, &pairs),
            _ => steepest.clone(),
        };
        if dot(&d, &g) >= 0.0 {
            d = steepest;
            pairs.clear();
        }
        // Without curvature information the first trial moves the largest
        // component by one unit.
        let mut alpha = if pairs.is_empty() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax > 0.0 {
                1.0 / dmax
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let mut best_seen: Option<(Vec<f64>, f64)> = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial, lower, upper);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            let f_trial = fun.eval(&trial);
            if f_trial <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((trial, f_trial));
                break;
            }
            if f_trial < fx && best_seen.as_ref().map_or(true, |(_, b)| f_trial < *b) {
                best_seen = Some((trial, f_trial));
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted.or(best_seen) else {
            break Termination::LineSearch;
        };

        let g_new = fun.gradient(&x_new, lower, upper, opts.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if opts.method == Method::LimitedMemory && dot(&s, &y) > 1e-10 * dot(&y, &y).max(1e-300) {
            if pairs.len() == opts.memory.max(1) {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }

        let decrease = fx - f_new;
        x = x_new;
        g = g_new;
        let scale = fx.abs().max(f_new.abs()).max(1.0);
        fx = f_new;
        if decrease <= opts.f_tolerance * scale {
            break Termination::FunctionTolerance;
        }
    };

    Minimum {
        x,
        f: fx,
        iterations,
        evaluations: fun.evaluations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fine() -> Options {
        Options {
            fd_step: 1e-6,
            ..Default::default()
        }
    }

    #[test]
    fn active_upper_bound() {
        let m = minimize(
            |x| (x[0] - 2.0).powi(2) + (x[1] - 0.3).powi(2),
            &[0.5, 0.5],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &fine(),
        );
        assert!((m.x[0] - 1.0).abs() < 1e-12);
        assert!((m.x[1] - 0.3).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn rosenbrock_interior_minimum() {
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = minimize(rosen, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &fine());
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 2e-3, "{m:?}");
    }

    #[test]
    fn projected_gradient_variant_reaches_bound() {
        let opts = Options {
            method: Method::ProjectedGradient,
            ..fine()
        };
        let m = minimize(|x| -(x[0] + 2.0 * x[1]), &[0.2, 0.2], &[0.0, 0.0], &[1.0, 1.0], &opts);
        assert_eq!(m.x, vec![1.0, 1.0]);
    }

    #[test]
    fn start_is_projected_and_never_worse() {
        let f = |x: &[f64]| (x[0] - 0.25).abs();
        let m = minimize(f, &[3.0], &[0.0], &[1.0], &Options::default());
        assert!(m.x[0] >= 0.0 && m.x[0] <= 1.0);
        assert!(m.f <= 0.75);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let opts = Options {
            max_iterations: 3,
            ..fine()
        };
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = minimize(rosen, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        assert!(m.iterations <= 3);
    }
}
