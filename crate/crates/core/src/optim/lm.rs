use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{residual_norm, FitResult, Problem, Termination};
use crate::error::Result;

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmOptions {
    /// Trial steps (accepted or rejected) before giving up.
    pub max_iter: usize,
    /// Bound on `‖Jᵀr‖`, the gradient of half the squared loss.
    pub grad_tol: f64,
    pub step_tol: f64,
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub positivity_floor: f64,
    /// Damp with `diag(JᵀJ)` (Marquardt) instead of the identity (Levenberg).
    pub marquardt_scaling: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            lambda0: 1e-3,
            lambda_up: 4.0,
            lambda_down: 0.5,
            positivity_floor: 1e-12,
            marquardt_scaling: true,
        }
    }
}

/// Damped Gauss–Newton on the residual vector, with Jacobians from the
/// forward sensitivity equations and Marquardt's diagonal scaling.
///
/// Fails only if the model cannot be integrated at `p0`; failures at trial
/// points count as rejected steps.
pub fn fit_lm(prob: &Problem, p0: &[f64], opts: &LmOptions) -> Result<FitResult> {
    let clock = Instant::now();
    let dp = prob.param_dim();
    let mut p = p0.to_vec();
    prob.clamp(&mut p, opts.positivity_floor);

    let mut r = Vec::new();
    let mut jac = Vec::new();
    prob.residuals_and_jacobian(&p, &mut r, &mut jac)?;
    let mut loss = residual_norm(&r);
    let mut trace = vec![loss];
    let mut evals = 1;
    let mut lambda = opts.lambda0;
    let mut iters = 0;
    let mut r_try = Vec::new();
    let mut jac_try = Vec::new();
    let m = r.len();

    let termination = loop {
        let jm = DMatrix::from_row_slice(m, dp, &jac);
        let g = jm.tr_mul(&DVector::from_column_slice(&r));
        if g.norm() <= opts.grad_tol {
            break Termination::Converged;
        }
        if iters >= opts.max_iter {
            break Termination::MaxIter;
        }
        iters += 1;
        let a = jm.tr_mul(&jm);
        let max_diag = a.diagonal().max();
        let mut damped = a.clone();
        for i in 0..dp {
            let d = if opts.marquardt_scaling {
                a[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE)
            } else {
                1.0
            };
            damped[(i, i)] += lambda * d;
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= opts.lambda_up;
            continue;
        };
        let delta = chol.solve(&(-&g));
        let mut p_try: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        prob.clamp(&mut p_try, opts.positivity_floor);
        let step = p_try
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if step <= opts.step_tol {
            break Termination::Converged;
        }
        evals += 1;
        let ok = prob.residuals_and_jacobian(&p_try, &mut r_try, &mut jac_try).is_ok();
        let loss_try = if ok { residual_norm(&r_try) } else { f64::INFINITY };
        if loss_try < loss {
            p = p_try;
            std::mem::swap(&mut r, &mut r_try);
            std::mem::swap(&mut jac, &mut jac_try);
            loss = loss_try;
            trace.push(loss);
            lambda *= opts.lambda_down;
        } else {
            lambda *= opts.lambda_up;
        }
    };

    Ok(FitResult {
        p_hat: p,
        loss_final: loss,
        loss_trace: trace,
        n_iterations: iters,
        n_evaluations: evals,
        termination,
        seed: None,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LotkaVolterra;
    use crate::ode::{integrate, InputSource};
    use crate::optim::Observations;
    use crate::signal::Signal;

    const P: [f64; 4] = LotkaVolterra::TRUE_PARAMS;

    fn cosine() -> Signal {
        Signal::sampled_from_fn(|t| (t.cos() + 1.0) / 2.0, 0.01, 20.0).unwrap()
    }

    fn data(sig: &Signal, n: usize) -> Observations {
        let times: Vec<f64> = (1..=n).map(|k| 20.0 * k as f64 / n as f64).collect();
        let m = LotkaVolterra::default();
        let tr = integrate(&m, &P, InputSource::Sampled(sig), &times, &Default::default()).unwrap();
        let values = (0..n).flat_map(|j| tr.state(j).to_vec()).collect();
        Observations::full(times, 2, values).unwrap()
    }

    #[test]
    fn start_at_truth() {
        let sig = cosine();
        let obs = data(&sig, 10);
        let m = LotkaVolterra::default();
        let prob = Problem::new(&m, InputSource::Sampled(&sig), &obs).unwrap();
        let fit = fit_lm(&prob, &P, &LmOptions::default()).unwrap();
        assert!(fit.n_iterations <= 2, "{fit:?}");
        assert!(fit.loss_final < 1e-6);
        assert!(fit.converged());
    }

    #[test]
    fn recovers_from_a_nearby_start() {
        let sig = cosine();
        let obs = data(&sig, 10);
        let m = LotkaVolterra::default();
        let prob = Problem::new(&m, InputSource::Sampled(&sig), &obs).unwrap();
        let fit = fit_lm(&prob, &[1.5, 0.7, 1.3, 0.8], &LmOptions::default()).unwrap();
        for (a, b) in fit.p_hat.iter().zip(&P) {
            assert!(((a - b) / b).abs() < 1e-4, "{:?}", fit.p_hat);
        }
        assert!(fit.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((prob.try_loss(&fit.p_hat).unwrap() - fit.loss_final).abs() <= 1e-12 * fit.loss_final.max(1e-300));
    }

    #[test]
    fn failure_at_start_is_an_error() {
        let sig = cosine();
        let obs = data(&sig, 10);
        let m = LotkaVolterra::default();
        let prob = Problem::new(&m, InputSource::Sampled(&sig), &obs).unwrap();
        let floor = LmOptions {
            positivity_floor: f64::NEG_INFINITY,
            ..Default::default()
        };
        assert!(fit_lm(&prob, &[2.0, 0.5, -50.0, 1.0], &floor).is_err());
    }
}
