use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A parametrized non-autonomous vector field `dy/dt = F(y, p, s)`, where
/// `s` is the value of the external signal at time `t`.
///
/// Matrices are written row-major into caller-provided slices.
pub trait OdeModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    /// Initial state; never depends on the parameters.
    fn initial_state(&self) -> Vec<f64>;
    fn param_names(&self) -> Vec<String>;
    /// Which parameters must stay positive during optimization.
    fn param_positivity(&self) -> Vec<bool> {
        vec![true; self.param_dim()]
    }
    /// A representative parameter vector, used for self-tests.
    fn nominal_params(&self) -> Vec<f64>;
    /// Typical signal range, used for self-tests.
    fn input_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn rhs(&self, t: f64, y: &[f64], p: &[f64], s: f64, dy: &mut [f64]);
    /// `∂F/∂y`, `D_y × D_y`.
    fn jac_y(&self, t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]);
    /// `∂F/∂p`, `D_y × D_p`.
    fn jac_p(&self, t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]);
}

/// Shared handle to a model.
pub type ModelSpec = Arc<dyn OdeModel>;

type RhsFn = dyn Fn(f64, &[f64], &[f64], f64, &mut [f64]) + Send + Sync;

/// A model assembled from closures, for user-defined systems.
pub struct FnModel {
    pub name: String,
    pub state_dim: usize,
    pub param_dim: usize,
    pub y0: Vec<f64>,
    pub param_names: Vec<String>,
    pub positivity: Vec<bool>,
    pub nominal: Vec<f64>,
    pub input_range: (f64, f64),
    pub rhs: Box<RhsFn>,
    pub jac_y: Box<RhsFn>,
    pub jac_p: Box<RhsFn>,
}

impl OdeModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn initial_state(&self) -> Vec<f64> {
        self.y0.clone()
    }
    fn param_names(&self) -> Vec<String> {
        self.param_names.clone()
    }
    fn param_positivity(&self) -> Vec<bool> {
        self.positivity.clone()
    }
    fn nominal_params(&self) -> Vec<f64> {
        self.nominal.clone()
    }
    fn input_range(&self) -> (f64, f64) {
        self.input_range
    }
    fn rhs(&self, t: f64, y: &[f64], p: &[f64], s: f64, dy: &mut [f64]) {
        (self.rhs)(t, y, p, s, dy)
    }
    fn jac_y(&self, t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
        (self.jac_y)(t, y, p, s, out)
    }
    fn jac_p(&self, t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
        (self.jac_p)(t, y, p, s, out)
    }
}

/// Compares the analytic Jacobians against central finite differences of
/// the right-hand side at `points` random test points around the initial
/// state and nominal parameters. Fails on the first entry whose error
/// exceeds `1e-5` relative (plus a `1e-8` absolute floor).
pub fn check_jacobians(model: &dyn OdeModel, points: usize, seed: u64) -> Result<()> {
    let dy = model.state_dim();
    let dp = model.param_dim();
    let y0 = model.initial_state();
    let p0 = model.nominal_params();
    if y0.len() != dy || p0.len() != dp || model.param_names().len() != dp {
        return Err(Error::Dimension(format!(
            "model `{}` declares D_y={dy}, D_p={dp} but supplies y0 of length {}, {} nominal parameters and {} names",
            model.name(),
            y0.len(),
            p0.len(),
            model.param_names().len()
        )));
    }
    let (s_lo, s_hi) = model.input_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ja = vec![0.0; dy * dy];
    let mut jp = vec![0.0; dy * dp];
    let mut fp = vec![0.0; dy];
    let mut fm = vec![0.0; dy];
    for _ in 0..points {
        let t = rng.random_range(0.0..10.0);
        let s = if s_hi > s_lo { rng.random_range(s_lo..=s_hi) } else { s_lo };
        let y: Vec<f64> = y0
            .iter()
            .map(|&v| v * rng.random_range(0.5..1.5) + rng.random_range(-0.3..0.3))
            .collect();
        let p: Vec<f64> = p0.iter().map(|&v| v * rng.random_range(0.5..2.0)).collect();
        model.jac_y(t, &y, &p, s, &mut ja);
        model.jac_p(t, &y, &p, s, &mut jp);

        let mut probe = y.clone();
        for k in 0..dy {
            let h = 1e-6 * y[k].abs().max(1.0);
            probe[k] = y[k] + h;
            model.rhs(t, &probe, &p, s, &mut fp);
            probe[k] = y[k] - h;
            model.rhs(t, &probe, &p, s, &mut fm);
            probe[k] = y[k];
            for i in 0..dy {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                compare("jac_y", i, k, ja[i * dy + k], fd)?;
            }
        }
        let mut probe = p.clone();
        for j in 0..dp {
            let h = 1e-6 * p[j].abs().max(1.0);
            probe[j] = p[j] + h;
            model.rhs(t, &y, &probe, s, &mut fp);
            probe[j] = p[j] - h;
            model.rhs(t, &y, &probe, s, &mut fm);
            probe[j] = p[j];
            for i in 0..dy {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                compare("jac_p", i, j, jp[i * dp + j], fd)?;
            }
        }
    }
    Ok(())
}

fn compare(which: &'static str, row: usize, col: usize, analytic: f64, numeric: f64) -> Result<()> {
    let tol = 1e-5 * analytic.abs().max(numeric.abs()) + 1e-8;
    if !((analytic - numeric).abs() <= tol) {
        return Err(Error::JacobianMismatch {
            which,
            row,
            col,
            analytic,
            numeric,
        });
    }
    Ok(())
}
