//! The outer loop: smooth the signal a little more, refit the parameters
//! against the smoothed signal starting from the previous estimate, repeat
//! until the estimate stops moving.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{InputSource, IntegratorOptions, OdeModel};
use crate::optim::{fit_lm, FitResult, LmOptions, Observations, Problem, Termination, LOSS_SENTINEL};
use crate::signal::{fmt17, Signal};
use crate::smoother::{train_stage1, SmoothTable, SmootherNet, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HadesConfig {
    /// Stop once `‖p_n - p_{n-1}‖₂ ≤ epsilon`.
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub stage1: TrainConfig,
    pub stage2: LmOptions,
    /// Optional extra stop on `max_i |Δp_i| / |p_i|`.
    pub relative_step: Option<f64>,
    /// Hermite knots per sample interval of the (refined) Stage-1 signal,
    /// used to freeze each smoothed signal for Stage 2. Zero evaluates the
    /// network directly.
    pub table_knots_per_sample: usize,
    /// Stage 1 fits the held signal on a grid that splits every sample
    /// interval into this many parts, so that `S̃_n` approaches the held
    /// function rather than only its sample values.
    pub stage1_refine: usize,
    pub integrator: IntegratorOptions,
    pub record_trace: bool,
}

impl Default for HadesConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_outer_iterations: 100,
            stage1: TrainConfig::default(),
            stage2: LmOptions::default(),
            relative_step: None,
            table_knots_per_sample: 2,
            stage1_refine: 10,
            integrator: IntegratorOptions::default(),
            record_trace: true,
        }
    }
}

impl HadesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::Config("max_outer_iterations must be at least 1".into()));
        }
        if self.stage1_refine == 0 {
            return Err(Error::Config("stage1_refine must be at least 1".into()));
        }
        if self.relative_step.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("relative_step must be positive".into()));
        }
        self.stage1.validate()
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HadesIteration {
    pub n: usize,
    pub stage1_mse: f64,
    pub p: Vec<f64>,
    /// Loss against the smoothed signal of this iteration.
    pub loss: f64,
    pub step_norm: f64,
    pub lm_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HadesTrace {
    pub iterations: Vec<HadesIteration>,
}

impl HadesTrace {
    /// Columns `iter, stage1_mse, loss, step_norm, p_1..p_D`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dp = self.iterations.first().map_or(0, |r| r.p.len());
        let mut header: Vec<String> = ["iter", "stage1_mse", "loss", "step_norm"].map(String::from).to_vec();
        header.extend((1..=dp).map(|i| format!("p_{i}")));
        w.write_record(&header)?;
        for r in &self.iterations {
            let mut row = vec![
                r.n.to_string(),
                fmt17(r.stage1_mse),
                fmt17(r.loss),
                fmt17(r.step_norm),
            ];
            row.extend(r.p.iter().map(|v| fmt17(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The smoothed signal produced by one Stage-1 call.
#[derive(Debug, Clone)]
pub struct SmoothStage {
    pub net: SmootherNet,
    pub table: Option<SmoothTable>,
    /// MSE against the signal after training.
    pub mse: f64,
    pub loss_trace: Vec<f64>,
}

impl SmoothStage {
    pub fn input(&self) -> InputSource<'_> {
        match &self.table {
            Some(t) => InputSource::Table(t),
            None => InputSource::Network(&self.net),
        }
    }
}

struct ScheduleState {
    net: SmootherNet,
    stages: Vec<Arc<SmoothStage>>,
}

/// The sequence of smoothed signals `S̃_1, S̃_2, ...` for one signal,
/// training configuration and network seed.
///
/// Stage 1 never sees the model parameters, so every run on the same
/// signal and seed walks through the same sequence. The schedule trains each
/// stage once, on first request, and hands out shared snapshots afterwards.
pub struct SmootherSchedule {
    signal: Signal,
    train: TrainConfig,
    knots: usize,
    state: Mutex<ScheduleState>,
}

impl SmootherSchedule {
    pub fn new(signal: Signal, train: TrainConfig, knots_per_sample: usize, seed: u64) -> Result<Self> {
        train.validate()?;
        let net = SmootherNet::init_for(&signal, seed)?;
        Ok(Self {
            signal,
            train,
            knots: knots_per_sample,
            state: Mutex::new(ScheduleState {
                net,
                stages: Vec::new(),
            }),
        })
    }

    pub fn for_config(signal: Signal, cfg: &HadesConfig, seed: u64) -> Result<Self> {
        Self::new(signal.refine(cfg.stage1_refine)?, cfg.stage1, cfg.table_knots_per_sample, seed)
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    /// The smoothed signal after `n ≥ 1` Stage-1 calls.
    pub fn stage(&self, n: usize) -> Result<Arc<SmoothStage>> {
        assert!(n >= 1, "stages are numbered from 1");
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while st.stages.len() < n {
            let (net, loss_trace) = train_stage1(st.net.clone(), &self.signal, &self.train)?;
            let mse = net.mse(&self.signal);
            let table = (self.knots > 0).then(|| {
                let end = self.signal.domain_end();
                let intervals = (self.knots * self.signal.len()).max(1);
                net.tabulate(end, intervals)
            });
            st.net = net.clone();
            st.stages.push(Arc::new(SmoothStage {
                net,
                table,
                mse,
                loss_trace,
            }));
        }
        Ok(st.stages[n - 1].clone())
    }
}

/// Runs the two-stage loop from `p0` with a freshly seeded network.
pub fn run_hades(
    model: &dyn OdeModel,
    signal: &Signal,
    obs: &Observations,
    p0: &[f64],
    cfg: &HadesConfig,
    seed: u64,
) -> Result<(FitResult, HadesTrace)> {
    cfg.validate()?;
    let schedule = SmootherSchedule::for_config(signal.clone(), cfg, seed)?;
    let (mut fit, trace) = run_hades_with_schedule(model, &schedule, obs, p0, cfg)?;
    fit.seed = Some(seed);
    Ok((fit, trace))
}

/// Runs the loop against a (possibly shared and partly trained) schedule.
pub fn run_hades_with_schedule(
    model: &dyn OdeModel,
    schedule: &SmootherSchedule,
    obs: &Observations,
    p0: &[f64],
    cfg: &HadesConfig,
) -> Result<(FitResult, HadesTrace)> {
    cfg.validate()?;
    if p0.len() != model.param_dim() || p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("invalid initial parameters {p0:?}")));
    }
    let clock = Instant::now();
    let mut p_prev = p0.to_vec();
    let mut trace = HadesTrace::default();
    let mut losses = Vec::new();
    let mut evals = 0;
    let mut last_loss = None;
    let mut termination = Termination::MaxIter;

    for n in 1..=cfg.max_outer_iterations {
        let stage = schedule.stage(n)?;
        let prob = Problem::new(model, stage.input(), obs)?.with_integrator(cfg.integrator);
        let fit = match fit_lm(&prob, &p_prev, &cfg.stage2) {
            Ok(f) => f,
            Err(Error::Integration { .. }) => {
                termination = Termination::IntegrationFailurePersistent;
                break;
            }
            Err(e) => return Err(e),
        };
        evals += fit.n_evaluations;
        let step_norm = fit
            .p_hat
            .iter()
            .zip(&p_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel_step = fit
            .p_hat
            .iter()
            .zip(&p_prev)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        losses.push(fit.loss_final);
        last_loss = Some(fit.loss_final);
        if cfg.record_trace {
            trace.iterations.push(HadesIteration {
                n,
                stage1_mse: stage.mse,
                p: fit.p_hat.clone(),
                loss: fit.loss_final,
                step_norm,
                lm_iterations: fit.n_iterations,
            });
        }
        p_prev = fit.p_hat;
        if step_norm <= cfg.epsilon || cfg.relative_step.is_some_and(|r| rel_step <= r) {
            termination = Termination::Converged;
            break;
        }
    }

    Ok((
        FitResult {
            p_hat: p_prev,
            loss_final: last_loss.unwrap_or(LOSS_SENTINEL),
            loss_trace: losses.clone(),
            n_iterations: losses.len(),
            n_evaluations: evals,
            termination,
            seed: None,
            wall_time: clock.elapsed().as_secs_f64(),
        },
        trace,
    ))
}
