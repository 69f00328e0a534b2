use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{clamped_objective, FitResult, Minimum, Problem, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Max-norm bound on the finite-difference gradient.
    pub gtol: f64,
    /// Relative objective decrease below which the run counts as converged.
    pub ftol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
    pub positivity_floor: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            gtol: 1e-5,
            ftol: 2.2e-9,
            fd_step: 1e-6,
            c1: 1e-4,
            max_backtracks: 40,
            positivity_floor: 1e-12,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with central finite-difference gradients and a
/// backtracking Armijo line search. `project` is applied to every trial
/// point.
pub fn lbfgs_fd(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    project: &dyn Fn(&mut [f64]),
    opts: &LbfgsOptions,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let grad = |x: &[f64], g: &mut [f64], evals: &mut usize, eval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
        let mut probe = x.to_vec();
        for i in 0..n {
            let h = opts.fd_step * if x[i] != 0.0 { x[i].abs() } else { 1.0 };
            probe[i] = x[i] + h;
            let up = eval(&probe, evals);
            probe[i] = x[i] - h;
            let dn = eval(&probe, evals);
            probe[i] = x[i];
            g[i] = (up - dn) / (2.0 * h);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = eval(&x, &mut evals);
    let mut g = vec![0.0; n];
    grad(&x, &mut g, &mut evals, &mut eval);
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    let termination = loop {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            break Termination::Stalled;
        }
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gtol {
            break Termination::Converged;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIter;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xt);
            let ft = eval(&xt, &mut evals);
            if ft <= fx + opts.c1 * step * slope {
                accepted = Some((xt, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if history.is_empty() {
                break Termination::Stalled;
            }
            history.clear();
            continue;
        };

        let mut g_new = vec![0.0; n];
        grad(&x_new, &mut g_new, &mut evals, &mut eval);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if rel <= opts.ftol {
            break Termination::Converged;
        }
    };

    Minimum {
        x,
        f: fx,
        trace,
        iterations,
        evaluations: evals,
        termination,
    }
}

/// L-BFGS on the loss with finite-difference gradients.
pub fn fit_lbfgs_fd(prob: &Problem, p0: &[f64], opts: &LbfgsOptions) -> FitResult {
    let clock = Instant::now();
    let floor = opts.positivity_floor;
    let mut f = clamped_objective(prob, floor);
    let project = |x: &mut [f64]| prob.clamp(x, floor);
    lbfgs_fd(&mut f, p0, &project, opts).into_fit(prob, floor, None, clock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let mut f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 0.5 * x[0] * x[1];
        let opts = LbfgsOptions {
            ftol: 1e-15,
            gtol: 1e-7,
            ..Default::default()
        };
        let m = lbfgs_fd(&mut f, &[5.0, 5.0], &|_| {}, &opts);
        // Analytic gradient vanishes at the minimizer.
        let gx = 2.0 * (m.x[0] - 1.0) + 0.5 * m.x[1];
        let gy = 20.0 * (m.x[1] + 2.0) + 0.5 * m.x[0];
        assert!(gx.abs() < 1e-6 && gy.abs() < 1e-6, "{m:?}");
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn projection_keeps_iterates_feasible() {
        let mut f = |x: &[f64]| (x[0] + 1.0).powi(2);
        let floor = 1e-12;
        let m = lbfgs_fd(&mut f, &[3.0], &|x: &mut [f64]| x[0] = x[0].max(floor), &Default::default());
        assert!(m.x[0] >= floor && m.x[0] < 1e-6, "{m:?}");
    }
}
