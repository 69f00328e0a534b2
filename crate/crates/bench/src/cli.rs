//! The `hades` command line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hades_core::signal::fmt17;
use hades_core::smoother::{train_stage1, SmootherNet};

use crate::config::{ExperimentConfig, OptimizerId};
use crate::data::{build_signal, draw_initial_guess, Experiment};
use crate::error::{BenchError, Result};
use crate::gronwall::{ratio_spread, run_gronwall};
use crate::landscape::run_landscape;
use crate::seeds::SeedStreams;
use crate::study::{fit_once, network_schedule, run_study};

#[derive(Debug, Parser)]
#[command(name = "hades", version, about = "Fit ODE models driven by discontinuous inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured input signal to signal.csv.
    GenSignal(ConfigArg),
    /// Write signal.csv and synthetic observations.csv.
    GenObs(ConfigArg),
    /// One fit; writes fit_result.json and trace.csv.
    Fit(ConfigArg),
    /// Multi-start study; writes report.csv and summary.json.
    Study(ConfigArg),
    /// Loss over a parameter grid; writes landscape.csv.
    Landscape(ConfigArg),
    /// Input-perturbation study; writes gronwall.csv.
    Gronwall(ConfigArg),
    /// Stage-1 smoothing only; writes network.json and smoothed.csv.
    Smooth(ConfigArg),
}

/// Runs the CLI on `argv` and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    let (arg, run): (&ConfigArg, fn(&ExperimentConfig) -> Result<String>) = match &cmd {
        Command::GenSignal(a) => (a, gen_signal),
        Command::GenObs(a) => (a, gen_obs),
        Command::Fit(a) => (a, fit),
        Command::Study(a) => (a, study),
        Command::Landscape(a) => (a, landscape),
        Command::Gronwall(a) => (a, gronwall),
        Command::Smooth(a) => (a, smooth),
    };
    let cfg = ExperimentConfig::load(&arg.config)?;
    fs::create_dir_all(cfg.output_path())?;
    run(&cfg)
}

fn gen_signal(cfg: &ExperimentConfig) -> Result<String> {
    let sig = build_signal(cfg)?;
    let path = cfg.output_path().join("signal.csv");
    sig.write_csv(&path)?;
    Ok(format!(
        "signal: {} samples, {} switches on [0, {}] -> {}",
        sig.len(),
        sig.switch_times().len(),
        sig.domain_end(),
        path.display()
    ))
}

fn gen_obs(cfg: &ExperimentConfig) -> Result<String> {
    let exp = Experiment::prepare(cfg)?;
    let dir = cfg.output_path();
    exp.signal.write_csv(dir.join("signal.csv"))?;
    exp.obs.write_csv(dir.join("observations.csv"))?;
    Ok(format!(
        "observations: {} times of {} component(s) -> {}",
        exp.obs.len(),
        exp.obs.observed().len(),
        dir.join("observations.csv").display()
    ))
}

fn fit(cfg: &ExperimentConfig) -> Result<String> {
    let exp = Experiment::prepare(cfg)?;
    let seed = SeedStreams::new(cfg.seed).indexed(SeedStreams::TRIALS, 0);
    let p0 = match &cfg.p0 {
        Some(p) if p.len() != exp.p_true.len() => {
            return Err(BenchError::Config(format!(
                "field `p0`: expected {} values, got {}",
                exp.p_true.len(),
                p.len()
            )))
        }
        Some(p) => p.clone(),
        None => draw_initial_guess(&exp.p_true, cfg.init_box, seed),
    };
    let schedule = match cfg.optimizer {
        OptimizerId::Hades => Some(network_schedule(&exp, cfg)?),
        _ => None,
    };
    let (result, trace) = fit_once(&exp, cfg, &p0, seed, schedule.as_ref())?;
    let dir = cfg.output_path();
    result.save_json(dir.join("fit_result.json"))?;
    match (&trace, &schedule) {
        (Some(t), Some(s)) => {
            t.write_csv(dir.join("trace.csv"))?;
            if let Some(last) = t.iterations.last() {
                s.stage(last.n)?.net.save_json(dir.join("network.json"))?;
            }
        }
        _ => {
            let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
            w.write_record(["iter", "loss"])?;
            for (k, l) in result.loss_trace.iter().enumerate() {
                w.write_record([k.to_string(), fmt17(*l)])?;
            }
            w.flush()?;
        }
    }
    let m = hades_core::optim::mape(&result.p_hat, &exp.p_true)?;
    Ok(format!(
        "fit: {} {} after {} iterations, loss {:.3e}, MAPE {:.3}% -> {}",
        cfg.optimizer.as_str(),
        result.termination.as_str(),
        result.n_iterations,
        result.loss_final,
        m,
        dir.display()
    ))
}

fn study(cfg: &ExperimentConfig) -> Result<String> {
    let report = run_study(cfg)?;
    let dir = cfg.output_path();
    report.write_all(&dir)?;
    let s = &report.summary;
    Ok(format!(
        "study: {} trials of {}, median MAPE {:.3}%, converged {:.0}%, failed {:.0}% -> {}",
        s.trials,
        s.optimizer,
        s.mape_median,
        100.0 * s.convergence_fraction,
        100.0 * s.failed_fraction,
        dir.display()
    ))
}

fn landscape(cfg: &ExperimentConfig) -> Result<String> {
    if cfg.landscape.is_none() {
        return Err(BenchError::Config("field `landscape` is required for this command".into()));
    }
    let exp = Experiment::prepare(cfg)?;
    let ls = run_landscape(&exp, cfg)?;
    let path = cfg.output_path().join("landscape.csv");
    ls.write_csv(&path)?;
    let (a, b, v) = ls.argmin();
    Ok(format!(
        "landscape: {}x{} grid, minimum {:.3e} at ({}, {}) = ({}, {}), roughness {:.3e} -> {}",
        ls.axis1.len(),
        ls.axis2.len(),
        v,
        ls.names.0,
        ls.names.1,
        ls.axis1[a],
        ls.axis2[b],
        ls.mean_abs_second_difference(),
        path.display()
    ))
}

fn gronwall(cfg: &ExperimentConfig) -> Result<String> {
    let exp = Experiment::prepare(cfg)?;
    let blocks = run_gronwall(&exp, cfg)?;
    let path = cfg.output_path().join("gronwall.csv");
    crate::gronwall::write_csv(&path, &exp.model.param_names(), &blocks)?;
    let worst = blocks.iter().map(|(_, r)| ratio_spread(r)).fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "gronwall: {} parameter sets x {} scales, worst max/min ratio {:.4} -> {}",
        blocks.len(),
        cfg.gronwall.scales.len(),
        worst,
        path.display()
    ))
}

fn smooth(cfg: &ExperimentConfig) -> Result<String> {
    let sig = build_signal(cfg)?;
    let mut net = match &cfg.smooth.checkpoint {
        Some(p) => SmootherNet::load_json(cfg.resolve(p))?,
        None => SmootherNet::init_for(&sig, SeedStreams::new(cfg.seed).stream(SeedStreams::NETWORK))?,
    };
    let dir = cfg.output_path();
    let mut w = csv::Writer::from_path(dir.join("stage1.csv"))?;
    w.write_record(["stage", "epochs", "mse"])?;
    let mut epochs = 0;
    for stage in 1..=cfg.smooth.stages {
        net = train_stage1(net, &sig, &cfg.hades.stage1)?.0;
        epochs += cfg.hades.stage1.epochs;
        w.write_record([stage.to_string(), epochs.to_string(), fmt17(net.mse(&sig))])?;
    }
    w.flush()?;
    net.save_json(dir.join("network.json"))?;
    let ts = hades_core::norms::uniform_grid(0.0, sig.domain_end(), cfg.smooth.plot_points.max(2));
    let mut w = csv::Writer::from_path(dir.join("smoothed.csv"))?;
    w.write_record(["t", "signal", "smoothed"])?;
    for &t in &ts {
        w.write_record([fmt17(t), fmt17(sig.hold(t)), fmt17(net.forward(t))])?;
    }
    w.flush()?;
    Ok(format!(
        "smooth: {} stages ({} epochs), MSE {:.3e} -> {}",
        cfg.smooth.stages,
        epochs,
        net.mse(&sig),
        dir.display()
    ))
}
