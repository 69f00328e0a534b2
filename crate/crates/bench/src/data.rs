//! Signals, synthetic observations and initial guesses.

use hades_core::models::ModelRegistry;
use hades_core::ode::{integrate, InputSource, IntegratorOptions, ModelSpec, OdeModel};
use hades_core::optim::Observations;
use hades_core::signal::{sample_markov, synthetic_light_schedule, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, SignalSource};
use crate::error::{BenchError, Result};
use crate::seeds::SeedStreams;

pub fn build_signal(cfg: &ExperimentConfig) -> Result<Signal> {
    let seeds = SeedStreams::new(cfg.seed);
    let sig = match &cfg.signal {
        SignalSource::Markov { chain, horizon } => sample_markov(chain, *horizon, seeds.stream(SeedStreams::SIGNAL))?,
        SignalSource::Csv { path, horizon } => Signal::read_csv(cfg.resolve(path), *horizon)?,
        SignalSource::Smooth { horizon, step } => Signal::sampled_from_fn(|t| (t.cos() + 1.0) / 2.0, *step, *horizon)?,
        SignalSource::Light { schedule } => synthetic_light_schedule(schedule)?,
    };
    Ok(sig)
}

/// Uniform times `T/n, 2T/n, ..., T`.
pub fn observation_times(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// Integrates at `p_true` under the held signal and samples `n_s` uniform
/// times on `(0, T]`, adding Gaussian noise of s.d. `noise_sigma`.
pub fn generate_observations(
    model: &dyn OdeModel,
    p_true: &[f64],
    signal: &Signal,
    n_s: usize,
    noise_sigma: f64,
    observed: &[usize],
    seed: u64,
) -> Result<Observations> {
    if n_s == 0 {
        return Err(BenchError::Config("at least one observation is needed".into()));
    }
    if let Some(&i) = observed.iter().find(|&&i| i >= model.state_dim()) {
        return Err(BenchError::Config(format!(
            "state component {} does not exist; `{}` has {}",
            i + 1,
            model.name(),
            model.state_dim()
        )));
    }
    let times = observation_times(signal.domain_end(), n_s);
    let tr = integrate(model, p_true, InputSource::Sampled(signal), &times, &IntegratorOptions::default())
        .map_err(|e| BenchError::Config(format!("cannot simulate the true parameters: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut values = Vec::with_capacity(n_s * observed.len());
    for j in 0..n_s {
        let y = tr.state(j);
        for &i in observed {
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            values.push(y[i] + eps);
        }
    }
    Ok(Observations::new(times, observed.to_vec(), values)?)
}

/// Componentwise log-uniform draw from `[lo * p_i, hi * p_i]`.
pub fn draw_initial_guess(p_true: &[f64], init_box: [f64; 2], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (init_box[0].ln(), init_box[1].ln());
    p_true.iter().map(|p| p * rng.random_range(a..=b).exp()).collect()
}

pub fn init_bounds(p_true: &[f64], init_box: [f64; 2]) -> Vec<(f64, f64)> {
    p_true
        .iter()
        .map(|&p| {
            let (u, v) = (p * init_box[0], p * init_box[1]);
            (u.min(v), u.max(v))
        })
        .collect()
}

/// Everything a run needs before any optimizer starts.
pub struct Experiment {
    pub model: ModelSpec,
    pub signal: Signal,
    pub p_true: Vec<f64>,
    pub obs: Observations,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        Self::prepare_with(cfg, &ModelRegistry::with_builtins())
    }

    pub fn prepare_with(cfg: &ExperimentConfig, registry: &ModelRegistry) -> Result<Self> {
        let model = registry
            .resolve(&cfg.model)
            .map_err(|e| BenchError::Config(format!("field `model`: {e}")))?;
        let p_true = match &cfg.true_params {
            Some(p) if p.len() != model.param_dim() => {
                return Err(BenchError::Config(format!(
                    "field `true_params`: `{}` has {} parameters, got {}",
                    cfg.model,
                    model.param_dim(),
                    p.len()
                )))
            }
            Some(p) => p.clone(),
            None => model.nominal_params(),
        };
        let signal = build_signal(cfg)?;
        let observed: Vec<usize> = match &cfg.observed_states {
            Some(v) => v.iter().map(|i| i - 1).collect(),
            None => (0..model.state_dim()).collect(),
        };
        let obs = match &cfg.observations {
            Some(path) => Observations::read_csv(cfg.resolve(path))?,
            None => {
                let seed = SeedStreams::new(cfg.seed).stream(SeedStreams::OBSERVATIONS);
                generate_observations(&*model, &p_true, &signal, cfg.n_obs, cfg.noise_sigma, &observed, seed)?
            }
        };
        Ok(Self {
            model,
            signal,
            p_true,
            obs,
        })
    }

    /// `index` in the given `param` name list, for config diagnostics.
    pub fn param_index(&self, name: &str) -> Result<usize> {
        let names = self.model.param_names();
        names.iter().position(|n| n == name).ok_or_else(|| {
            BenchError::Config(format!(
                "unknown parameter `{name}` for `{}`; expected one of {}",
                self.model.name(),
                names.join(", ")
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hades_core::models::LotkaVolterra;

    fn rk4(p: &[f64], sig: impl Fn(f64) -> f64, t_end: f64, h: f64) -> [f64; 2] {
        let f = |s: f64, y: [f64; 2]| [p[0] * s * y[0] - p[2] * y[0] * y[1], -p[1] * y[1] + p[3] * y[0] * y[1]];
        let n = (t_end / h).round() as usize;
        let mut y = [1.0, 1.0];
        for k in 0..n {
            // Steps never straddle a hold boundary, so one value serves all stages.
            let s = sig((k as f64 + 0.5) * h);
            let k1 = f(s, y);
            let k2 = f(s, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = f(s, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = f(s, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn uniform_schedule() {
        assert_eq!(observation_times(20.0, 10), (1..=10).map(|k| 2.0 * k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn smooth_lv_matches_fine_rk4() {
        let p = LotkaVolterra::TRUE_PARAMS;
        let step = 0.01;
        let sig = Signal::sampled_from_fn(|t| (t.cos() + 1.0) / 2.0, step, 20.0).unwrap();
        let obs = generate_observations(&LotkaVolterra::default(), &p, &sig, 10, 0.0, &[0, 1], 0).unwrap();
        // The oracle holds the same samples, stepping 1e-4 inside each.
        let held = |t: f64| ((t / step).floor() * step).cos() * 0.5 + 0.5;
        for (j, &t) in obs.times().iter().enumerate() {
            let want = rk4(&p, held, t, 1e-4);
            for i in 0..2 {
                assert!((obs.row(j)[i] - want[i]).abs() < 1e-6, "t={t} {:?} vs {want:?}", obs.row(j));
            }
        }
    }

    #[test]
    fn noise_is_seeded() {
        let sig = Signal::constant(1.0, 20.0).unwrap();
        let m = LotkaVolterra::default();
        let p = LotkaVolterra::TRUE_PARAMS;
        let a = generate_observations(&m, &p, &sig, 5, 0.1, &[0, 1], 3).unwrap();
        let b = generate_observations(&m, &p, &sig, 5, 0.1, &[0, 1], 3).unwrap();
        let c = generate_observations(&m, &p, &sig, 5, 0.1, &[0, 1], 4).unwrap();
        let clean = generate_observations(&m, &p, &sig, 5, 0.0, &[0, 1], 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, clean);
    }

    #[test]
    fn partial_observation() {
        let sig = Signal::constant(1.0, 20.0).unwrap();
        let m = LotkaVolterra::default();
        let obs = generate_observations(&m, &LotkaVolterra::TRUE_PARAMS, &sig, 4, 0.0, &[1], 0).unwrap();
        assert_eq!(obs.observed(), &[1]);
        assert!(generate_observations(&m, &LotkaVolterra::TRUE_PARAMS, &sig, 4, 0.0, &[2], 0).is_err());
    }

    #[test]
    fn initial_guesses_stay_in_the_box() {
        let p = [2.0, 0.5, 1.0, 1.0];
        for seed in 0..200 {
            let g = draw_initial_guess(&p, [0.25, 4.0], seed);
            for (x, t) in g.iter().zip(&p) {
                assert!(*x >= t / 4.0 * (1.0 - 1e-12) && *x <= 4.0 * t * (1.0 + 1e-12));
            }
        }
    }
}
