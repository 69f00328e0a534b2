//! Seeded multi-start studies.

use std::fs;
use std::path::Path;
use std::time::Instant;

use hades_core::hades::{run_hades_with_schedule, HadesTrace, SmootherSchedule};
use hades_core::ode::InputSource;
use hades_core::optim::{
    fit_differential_evolution, fit_lbfgs_fd, fit_lm, fit_nelder_mead, mape, FitResult, Problem, Termination,
    LOSS_SENTINEL,
};
use hades_core::signal::fmt17;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OptimizerId};
use crate::data::{draw_initial_guess, init_bounds, Experiment};
use crate::error::Result;
use crate::seeds::SeedStreams;

/// Losses below this are all "at the truth" for noiseless data, so the
/// relative failure rule does not separate them.
pub const FAIL_LOSS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub p0: Vec<f64>,
    pub fit: FitResult,
    pub mape: f64,
    /// `p̂_i / p_i`.
    pub normalized: Vec<f64>,
    /// Loss of `p̂` against the held signal itself.
    pub loss_signal: f64,
    pub failed_to_converge: bool,
    pub error: Option<String>,
    pub trace: Option<HadesTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub model: String,
    pub optimizer: String,
    pub trials: usize,
    pub n_obs: usize,
    pub seed: u64,
    pub p_true: Vec<f64>,
    pub mape_median: f64,
    pub mape_mean: f64,
    pub mape_q1: f64,
    pub mape_q3: f64,
    pub mape_iqr: f64,
    pub convergence_fraction: f64,
    pub failed_fraction: f64,
    pub best_loss: f64,
    /// Median of `p̂_i / p_i` per parameter.
    pub normalized_median: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub summary: StudySummary,
    pub param_names: Vec<String>,
    pub rows: Vec<TrialRow>,
}

impl StudyReport {
    pub fn mapes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mape).collect()
    }

    /// Per-trial `p̂ / p` vectors.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.normalized.clone()).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.param_names.len();
        let mut header: Vec<String> = [
            "trial",
            "seed",
            "termination",
            "failed_to_converge",
            "mape",
            "loss_final",
            "loss_signal",
            "n_iterations",
            "n_evaluations",
        ]
        .map(String::from)
        .to_vec();
        for prefix in ["p0", "p_hat", "ratio"] {
            header.extend(self.param_names.iter().map(|n| format!("{prefix}_{n}")));
        }
        header.push("error".into());
        header.push("wall_time".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                r.trial.to_string(),
                r.seed.to_string(),
                r.fit.termination.as_str().to_string(),
                r.failed_to_converge.to_string(),
                fmt17(r.mape),
                fmt17(r.fit.loss_final),
                fmt17(r.loss_signal),
                r.fit.n_iterations.to_string(),
                r.fit.n_evaluations.to_string(),
            ];
            for v in [&r.p0, &r.fit.p_hat, &r.normalized] {
                debug_assert_eq!(v.len(), d);
                row.extend(v.iter().map(|x| fmt17(*x)));
            }
            row.push(r.error.clone().unwrap_or_default());
            row.push(fmt17(r.fit.wall_time));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `report.csv`, `summary.json`, and `traces/trace_NNNN.csv` for HADES.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_csv(dir.join("report.csv"))?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        if self.rows.iter().any(|r| r.trace.is_some()) {
            let traces = dir.join("traces");
            fs::create_dir_all(&traces)?;
            for r in &self.rows {
                if let Some(t) = &r.trace {
                    t.write_csv(traces.join(format!("trace_{:04}.csv", r.trial)))?;
                }
            }
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// One optimizer run from `p0`.
pub fn fit_once(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    p0: &[f64],
    seed: u64,
    schedule: Option<&SmootherSchedule>,
) -> Result<(FitResult, Option<HadesTrace>)> {
    let prob = Problem::new(&*exp.model, InputSource::Sampled(&exp.signal), &exp.obs)?.with_integrator(cfg.integrator);
    let mut out = match cfg.optimizer {
        OptimizerId::Lm => (fit_lm(&prob, p0, &cfg.lm)?, None),
        OptimizerId::Nm => (fit_nelder_mead(&prob, p0, &cfg.nelder_mead), None),
        OptimizerId::Lbfgs => (fit_lbfgs_fd(&prob, p0, &cfg.lbfgs), None),
        OptimizerId::De => {
            let bounds = init_bounds(&exp.p_true, cfg.init_box);
            (fit_differential_evolution(&prob, &bounds, Some(p0), &cfg.de, seed)?, None)
        }
        OptimizerId::Hades => {
            let owned;
            let schedule = match schedule {
                Some(s) => s,
                None => {
                    owned = network_schedule(exp, cfg)?;
                    &owned
                }
            };
            let (fit, trace) = run_hades_with_schedule(&*exp.model, schedule, &exp.obs, p0, &cfg.hades)?;
            (fit, Some(trace))
        }
    };
    out.0.seed = Some(seed);
    Ok(out)
}

/// The Stage-1 sequence shared by every HADES trial of a study.
pub fn network_schedule(exp: &Experiment, cfg: &ExperimentConfig) -> Result<SmootherSchedule> {
    let seed = SeedStreams::new(cfg.seed).stream(SeedStreams::NETWORK);
    Ok(SmootherSchedule::for_config(exp.signal.clone(), &cfg.hades, seed)?)
}

pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let exp = Experiment::prepare(cfg)?;
    run_study_on(&exp, cfg)
}

/// Runs `cfg.trials` starts against prepared data. Trial failures are
/// recorded in their row.
pub fn run_study_on(exp: &Experiment, cfg: &ExperimentConfig) -> Result<StudyReport> {
    let schedule = match cfg.optimizer {
        OptimizerId::Hades => Some(network_schedule(exp, cfg)?),
        _ => None,
    };
    run_study_with(exp, cfg, schedule.as_ref())
}

/// Like [`run_study_on`] with a caller-owned smoothing schedule, so studies
/// that differ only in their observations can share Stage 1.
pub fn run_study_with(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    schedule: Option<&SmootherSchedule>,
) -> Result<StudyReport> {
    let seeds = SeedStreams::new(cfg.seed);
    let prob = Problem::new(&*exp.model, InputSource::Sampled(&exp.signal), &exp.obs)?.with_integrator(cfg.integrator);

    let mut rows: Vec<TrialRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = seeds.indexed(SeedStreams::TRIALS, trial as u64);
            let p0 = draw_initial_guess(&exp.p_true, cfg.init_box, seed);
            let clock = Instant::now();
            let (fit, trace, error) = match fit_once(exp, cfg, &p0, seed, schedule) {
                Ok((fit, trace)) => (fit, trace, None),
                Err(e) => (
                    FitResult {
                        p_hat: p0.clone(),
                        loss_final: LOSS_SENTINEL,
                        loss_trace: Vec::new(),
                        n_iterations: 0,
                        n_evaluations: 0,
                        termination: Termination::IntegrationFailurePersistent,
                        seed: Some(seed),
                        wall_time: clock.elapsed().as_secs_f64(),
                    },
                    None,
                    Some(e.to_string()),
                ),
            };
            let m = mape(&fit.p_hat, &exp.p_true).unwrap_or(f64::NAN);
            let normalized = fit.p_hat.iter().zip(&exp.p_true).map(|(a, b)| a / b).collect();
            TrialRow {
                trial,
                seed,
                p0,
                loss_signal: prob.loss(&fit.p_hat),
                fit,
                mape: m,
                normalized,
                failed_to_converge: false,
                error,
                trace,
            }
        })
        .collect();

    let best_loss = rows.iter().map(|r| r.fit.loss_final).fold(f64::INFINITY, f64::min);
    let threshold = (10.0 * best_loss).max(FAIL_LOSS_FLOOR);
    for r in &mut rows {
        r.failed_to_converge = r.fit.termination != Termination::Converged || r.fit.loss_final > threshold;
    }

    let mapes: Vec<f64> = rows.iter().map(|r| r.mape).collect();
    let n = rows.len() as f64;
    let q1 = quantile(&mapes, 0.25);
    let q3 = quantile(&mapes, 0.75);
    let d = exp.p_true.len();
    let normalized_median = (0..d)
        .map(|i| median(&rows.iter().map(|r| r.normalized[i]).collect::<Vec<_>>()))
        .collect();
    let summary = StudySummary {
        model: exp.model.name().to_string(),
        optimizer: cfg.optimizer.as_str().to_string(),
        trials: rows.len(),
        n_obs: exp.obs.len(),
        seed: cfg.seed,
        p_true: exp.p_true.clone(),
        mape_median: median(&mapes),
        mape_mean: mapes.iter().sum::<f64>() / n,
        mape_q1: q1,
        mape_q3: q3,
        mape_iqr: q3 - q1,
        convergence_fraction: rows.iter().filter(|r| r.fit.converged()).count() as f64 / n,
        failed_fraction: rows.iter().filter(|r| r.failed_to_converge).count() as f64 / n,
        best_loss,
        normalized_median,
    };
    Ok(StudyReport {
        summary,
        param_names: exp.model.param_names(),
        rows,
    })
}
