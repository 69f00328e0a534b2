//! Loss evaluation and the optimizer suite.

mod de;
mod lbfgs;
mod lm;
mod nelder_mead;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, integrate_with_sensitivities, InputSource, IntegratorOptions, OdeModel};
use crate::signal::fmt17;

pub use de::{differential_evolution, fit_differential_evolution, DeOptions};
pub use lbfgs::{fit_lbfgs_fd, lbfgs_fd, LbfgsOptions};
pub use lm::{fit_lm, LmOptions};
pub use nelder_mead::{fit_nelder_mead, nelder_mead, NelderMeadOptions};

/// Loss reported for parameters at which the model cannot be integrated.
pub const LOSS_SENTINEL: f64 = 1e12;

/// Observed trajectory values, possibly of a subset of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    times: Vec<f64>,
    /// Zero-based state components that were measured.
    observed: Vec<usize>,
    /// Row-major `N × observed.len()`.
    values: Vec<f64>,
}

impl Observations {
    pub fn new(times: Vec<f64>, observed: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Config("observations need at least one time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("observation times must be finite and strictly increasing".into()));
        }
        if observed.is_empty() || observed.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("observed components must be non-empty and increasing".into()));
        }
        if values.len() != times.len() * observed.len() {
            return Err(Error::Dimension(format!(
                "{} times × {} components needs {} values, got {}",
                times.len(),
                observed.len(),
                times.len() * observed.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("observation values must be finite".into()));
        }
        Ok(Self {
            times,
            observed,
            values,
        })
    }

    /// All `dim` state components observed.
    pub fn full(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(times, (0..dim).collect(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let m = self.observed.len();
        &self.values[j * m..(j + 1) * m]
    }

    fn check_model(&self, model: &dyn OdeModel) -> Result<()> {
        if let Some(&i) = self.observed.iter().find(|&&i| i >= model.state_dim()) {
            return Err(Error::Dimension(format!(
                "observed component {} but model `{}` has {} states",
                i + 1,
                model.name(),
                model.state_dim()
            )));
        }
        Ok(())
    }

    /// `t,y<i>...` with one-based component indices in the header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(self.observed.iter().map(|i| format!("y{}", i + 1)));
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut row = vec![fmt17(self.times[j])];
            row.extend(self.row(j).iter().map(|v| fmt17(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0).map(str::trim) != Some("t") {
            return Err(Error::Config("observation CSV must start with a `t` column".into()));
        }
        let observed = header
            .iter()
            .skip(1)
            .map(|h| {
                h.trim()
                    .strip_prefix('y')
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .map(|k| k - 1)
                    .ok_or_else(|| Error::Config(format!("bad observation column `{h}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut fields = rec.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number `{f}`: {e}")))
            });
            times.push(fields.next().transpose()?.unwrap_or(f64::NAN));
            for v in fields {
                values.push(v?);
            }
        }
        Self::new(times, observed, values)
    }
}

/// Why an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    /// No acceptable step could be found before the convergence tests were met.
    Stalled,
    IntegrationFailurePersistent,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::Stalled => "stalled",
            Termination::IntegrationFailurePersistent => "integration_failure_persistent",
        }
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p_hat: Vec<f64>,
    pub loss_final: f64,
    pub loss_trace: Vec<f64>,
    pub n_iterations: usize,
    /// Objective (or residual) evaluations, excluding Jacobians.
    pub n_evaluations: usize,
    pub termination: Termination,
    pub seed: Option<u64>,
    /// Seconds.
    pub wall_time: f64,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Result of minimizing a plain objective function.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Best objective value after each iteration (or generation).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    fn into_fit(self, prob: &Problem, floor: f64, seed: Option<u64>, clock: std::time::Instant) -> FitResult {
        let mut p = self.x;
        prob.clamp(&mut p, floor);
        let termination = if self.f >= LOSS_SENTINEL {
            Termination::IntegrationFailurePersistent
        } else {
            self.termination
        };
        FitResult {
            p_hat: p,
            loss_final: self.f,
            loss_trace: self.trace,
            n_iterations: self.iterations,
            n_evaluations: self.evaluations,
            termination,
            seed,
            wall_time: clock.elapsed().as_secs_f64(),
        }
    }
}

/// Loss closure over the clamped parameters, for the derivative-free and
/// finite-difference optimizers.
fn clamped_objective<'a>(prob: &'a Problem, floor: f64) -> impl FnMut(&[f64]) -> f64 + 'a {
    let mut q = Vec::new();
    move |x: &[f64]| {
        q.clear();
        q.extend_from_slice(x);
        prob.clamp(&mut q, floor);
        prob.loss(&q)
    }
}

/// Mean absolute percentage error between estimate and truth.
pub fn mape(p_hat: &[f64], p_true: &[f64]) -> Result<f64> {
    if p_hat.len() != p_true.len() || p_true.is_empty() {
        return Err(Error::Dimension(format!(
            "MAPE of {} estimates against {} true values",
            p_hat.len(),
            p_true.len()
        )));
    }
    if let Some(i) = p_true.iter().position(|&v| v == 0.0) {
        return Err(Error::Config(format!("MAPE undefined: true parameter {} is zero", i + 1)));
    }
    let sum: f64 = p_hat
        .iter()
        .zip(p_true)
        .map(|(a, b)| ((a - b) / b).abs())
        .sum();
    Ok(100.0 * sum / p_true.len() as f64)
}

/// A model, its input and the data it should reproduce.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a dyn OdeModel,
    pub input: InputSource<'a>,
    pub obs: &'a Observations,
    pub integrator: IntegratorOptions,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a dyn OdeModel, input: InputSource<'a>, obs: &'a Observations) -> Result<Self> {
        obs.check_model(model)?;
        let end = input.domain_end();
        if let Some(&t) = obs.times().iter().find(|&&t| !(t >= 0.0 && t <= end)) {
            return Err(Error::Domain { t, end });
        }
        Ok(Self {
            model,
            input,
            obs,
            integrator: IntegratorOptions::default(),
        })
    }

    pub fn with_integrator(mut self, opts: IntegratorOptions) -> Self {
        self.integrator = opts;
        self
    }

    pub fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    /// Number of residual entries.
    pub fn residual_len(&self) -> usize {
        self.obs.len() * self.obs.observed().len()
    }

    /// Residuals `(y_model - y_obs) / sqrt(N)`, so that their Euclidean norm
    /// is the loss.
    pub fn residuals(&self, p: &[f64], r: &mut Vec<f64>) -> Result<()> {
        let tr = integrate(self.model, p, self.input, self.obs.times(), &self.integrator)?;
        self.fill_residuals(|j| tr.state(j), r);
        Ok(())
    }

    /// Residuals plus their Jacobian (row-major, `residual_len × D_p`).
    pub fn residuals_and_jacobian(&self, p: &[f64], r: &mut Vec<f64>, jac: &mut Vec<f64>) -> Result<()> {
        let tr = integrate_with_sensitivities(self.model, p, self.input, self.obs.times(), &self.integrator)?;
        self.fill_residuals(|j| tr.state(j), r);
        let dp = self.param_dim();
        let w = 1.0 / (self.obs.len() as f64).sqrt();
        jac.clear();
        for j in 0..self.obs.len() {
            let z = tr.sensitivity(j).expect("sensitivities requested");
            for &i in self.obs.observed() {
                jac.extend(z[i * dp..(i + 1) * dp].iter().map(|v| v * w));
            }
        }
        Ok(())
    }

    fn fill_residuals<'s>(&self, state: impl Fn(usize) -> &'s [f64], r: &mut Vec<f64>) {
        let w = 1.0 / (self.obs.len() as f64).sqrt();
        r.clear();
        for j in 0..self.obs.len() {
            let y = state(j);
            for (&i, &o) in self.obs.observed().iter().zip(self.obs.row(j)) {
                r.push((y[i] - o) * w);
            }
        }
    }

    /// Root-mean residual norm; errors only for malformed requests.
    pub fn try_loss(&self, p: &[f64]) -> Result<f64> {
        let mut r = Vec::with_capacity(self.residual_len());
        self.residuals(p, &mut r)?;
        Ok(residual_norm(&r))
    }

    /// Like [`Problem::try_loss`] but integration failures and non-finite
    /// parameters map to [`LOSS_SENTINEL`].
    pub fn loss(&self, p: &[f64]) -> f64 {
        if p.iter().any(|v| !v.is_finite()) {
            return LOSS_SENTINEL;
        }
        match self.try_loss(p) {
            Ok(v) if v.is_finite() => v.min(LOSS_SENTINEL),
            _ => LOSS_SENTINEL,
        }
    }

    /// Applies the positivity floor to constrained parameters.
    pub fn clamp(&self, p: &mut [f64], floor: f64) {
        for (v, pos) in p.iter_mut().zip(self.model.param_positivity()) {
            if pos && *v < floor {
                *v = floor;
            }
        }
    }
}

pub(crate) fn residual_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Loss of `p` against `obs`; integration failure gives [`LOSS_SENTINEL`].
pub fn loss(model: &dyn OdeModel, p: &[f64], input: InputSource, obs: &Observations) -> Result<f64> {
    let prob = Problem::new(model, input, obs)?;
    if p.len() != model.param_dim() {
        return Err(Error::Dimension(format!(
            "model `{}` has {} parameters, got {}",
            model.name(),
            model.param_dim(),
            p.len()
        )));
    }
    Ok(prob.loss(p))
}
