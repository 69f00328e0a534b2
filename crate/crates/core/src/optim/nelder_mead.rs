use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{clamped_objective, FitResult, Minimum, Problem, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Simplex diameter tolerance (max-norm around the best vertex).
    pub xatol: f64,
    /// Objective spread tolerance across vertices.
    pub fatol: f64,
    /// Relative size of the initial simplex.
    pub initial_step: f64,
    pub positivity_floor: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            xatol: 1e-4,
            fatol: 1e-4,
            initial_step: 0.05,
            positivity_floor: 1e-12,
        }
    }
}

/// Downhill simplex with dimension-adaptive coefficients (Gao & Han).
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (rho, chi, psi, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

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

    let mut sim: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] = if x[k] != 0.0 {
            (1.0 + opts.initial_step) * x[k]
        } else {
            0.00025
        };
        sim.push(x);
    }
    let mut fs: Vec<f64> = sim.iter().map(|x| eval(x, &mut evals)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;

    let termination = loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        sim = order.iter().map(|&i| sim[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();
        trace.push(fs[0]);

        let x_spread = sim[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = fs[1..].iter().map(|v| (v - fs[0]).abs()).fold(0.0, f64::max);
        if x_spread <= opts.xatol && f_spread <= opts.fatol {
            break Termination::Converged;
        }
        if evals >= opts.max_evals {
            break Termination::MaxIter;
        }
        iterations += 1;

        let mut xbar = vec![0.0; n];
        for x in &sim[..n] {
            for (c, v) in xbar.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let worst = sim[n].clone();
        let point = |a: f64| -> Vec<f64> {
            xbar.iter()
                .zip(&worst)
                .map(|(c, w)| (1.0 + a) * c - a * w)
                .collect()
        };

        let xr = point(rho);
        let fr = eval(&xr, &mut evals);
        let mut shrink = false;
        if fr < fs[0] {
            let xe = point(rho * chi);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                sim[n] = xe;
                fs[n] = fe;
            } else {
                sim[n] = xr;
                fs[n] = fr;
            }
        } else if fr < fs[n - 1] {
            sim[n] = xr;
            fs[n] = fr;
        } else if fr < fs[n] {
            let xc = point(psi * rho);
            let fc = eval(&xc, &mut evals);
            if fc <= fr {
                sim[n] = xc;
                fs[n] = fc;
            } else {
                shrink = true;
            }
        } else {
            let xcc = point(-psi);
            let fcc = eval(&xcc, &mut evals);
            if fcc < fs[n] {
                sim[n] = xcc;
                fs[n] = fcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            for j in 1..=n {
                let moved: Vec<f64> = sim[j]
                    .iter()
                    .zip(&sim[0])
                    .map(|(x, b)| b + sigma * (x - b))
                    .collect();
                fs[j] = eval(&moved, &mut evals);
                sim[j] = moved;
            }
        }
    };

    Minimum {
        x: sim[0].clone(),
        f: fs[0],
        trace,
        iterations,
        evaluations: evals,
        termination,
    }
}

/// Nelder–Mead on the loss, with constrained parameters clamped at the
/// positivity floor before every evaluation.
pub fn fit_nelder_mead(prob: &Problem, p0: &[f64], opts: &NelderMeadOptions) -> FitResult {
    let clock = Instant::now();
    let mut f = clamped_objective(prob, opts.positivity_floor);
    nelder_mead(&mut f, p0, opts).into_fit(prob, opts.positivity_floor, None, clock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let c = [1.0, -2.0, 0.5, 3.0];
        let mut f = |x: &[f64]| {
            x.iter()
                .zip(&c)
                .enumerate()
                .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                .sum::<f64>()
        };
        let opts = NelderMeadOptions {
            xatol: 1e-10,
            fatol: 1e-14,
            max_evals: 20_000,
            ..Default::default()
        };
        let m = nelder_mead(&mut f, &[0.0; 4], &opts);
        assert_eq!(m.termination, Termination::Converged);
        for (a, b) in m.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6, "{:?}", m.x);
        }
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock() {
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = NelderMeadOptions {
            xatol: 1e-10,
            fatol: 1e-14,
            max_evals: 5000,
            ..Default::default()
        };
        let m = nelder_mead(&mut f, &[-1.2, 1.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn budget_is_respected() {
        let mut f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let opts = NelderMeadOptions {
            max_evals: 50,
            xatol: 0.0,
            fatol: 0.0,
            ..Default::default()
        };
        let m = nelder_mead(&mut f, &[3.0, 4.0, 5.0], &opts);
        assert_eq!(m.termination, Termination::MaxIter);
        assert!(m.evaluations < 50 + 8);
    }
}
