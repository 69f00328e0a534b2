//! Experiment configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use hades_core::hades::HadesConfig;
use hades_core::ode::IntegratorOptions;
use hades_core::optim::{DeOptions, LbfgsOptions, LmOptions, NelderMeadOptions};
use hades_core::signal::{LightSchedule, MarkovChainSpec};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Where the external input comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSource {
    /// Markov-switching levels on `[0, horizon]`.
    Markov {
        #[serde(default = "MarkovChainSpec::two_state_default")]
        chain: MarkovChainSpec,
        horizon: f64,
    },
    /// Two-column `time,value` file. Paths are relative to the config file.
    Csv { path: PathBuf, horizon: Option<f64> },
    /// `(cos t + 1) / 2` sampled every `step`.
    Smooth {
        horizon: f64,
        #[serde(default = "default_smooth_step")]
        step: f64,
    },
    Light { schedule: LightSchedule },
}

fn default_smooth_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerId {
    Hades,
    Lm,
    Nm,
    De,
    Lbfgs,
}

impl OptimizerId {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerId::Hades => "hades",
            OptimizerId::Lm => "lm",
            OptimizerId::Nm => "nm",
            OptimizerId::De => "de",
            OptimizerId::Lbfgs => "lbfgs",
        }
    }
}

/// One landscape axis: a parameter swept over a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    /// Parameter name as reported by the model.
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisConfig {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub x: AxisConfig,
    pub y: AxisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GronwallConfig {
    pub scales: Vec<f64>,
    /// Extra parameter vectors drawn from the init box, besides the truth.
    pub random_params: usize,
    pub grid_points: usize,
}

impl Default for GronwallConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.0, 1e-3, 1e-2, 1e-1],
            random_params: 5,
            grid_points: 2001,
        }
    }
}

/// Settings for the Stage-1-only `smooth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothConfig {
    /// Stage-1 calls to run.
    pub stages: usize,
    /// Network checkpoint to continue from.
    pub checkpoint: Option<PathBuf>,
    /// Evaluation points written to `smoothed.csv`.
    pub plot_points: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            stages: 10,
            checkpoint: None,
            plot_points: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub signal: SignalSource,
    /// Defaults to the model's nominal parameters.
    #[serde(default)]
    pub true_params: Option<Vec<f64>>,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    /// One-based state components that are measured; all by default.
    #[serde(default)]
    pub observed_states: Option<Vec<usize>>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Existing observations file; generated from the signal when absent.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerId,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Initial guesses are drawn from `[lo * p_i, hi * p_i]`.
    #[serde(default = "default_init_box")]
    pub init_box: [f64; 2],
    /// Starting point for `fit`; drawn like trial 0 of a study when absent.
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub hades: HadesConfig,
    #[serde(default)]
    pub lm: LmOptions,
    #[serde(default)]
    pub nelder_mead: NelderMeadOptions,
    #[serde(default)]
    pub de: DeOptions,
    #[serde(default)]
    pub lbfgs: LbfgsOptions,
    #[serde(default)]
    pub landscape: Option<LandscapeConfig>,
    #[serde(default)]
    pub gronwall: GronwallConfig,
    #[serde(default)]
    pub smooth: SmoothConfig,
    /// Directory that relative paths resolve against; set by [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_n_obs() -> usize {
    10
}
fn default_optimizer() -> OptimizerId {
    OptimizerId::Hades
}
fn default_trials() -> usize {
    1
}
fn default_init_box() -> [f64; 2] {
    [0.25, 4.0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates. Serde diagnostics carry line, column and field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(BenchError::Config(format!("field `{field}`: {msg}")));
        if self.model.trim().is_empty() {
            return bad("model", "must name a registered model".into());
        }
        if self.n_obs == 0 {
            return bad("n_obs", "must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        let [lo, hi] = self.init_box;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad("init_box", format!("need 0 < lower < upper, got [{lo}, {hi}]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", format!("must be finite and non-negative, got {}", self.noise_sigma));
        }
        if let Some(obs) = &self.observed_states {
            if obs.is_empty() || obs.contains(&0) {
                return bad("observed_states", "one-based component indices, at least one".into());
            }
        }
        if let Some(p) = &self.true_params {
            if p.iter().any(|v| !v.is_finite() || *v == 0.0) {
                return bad("true_params", "must be finite and non-zero".into());
            }
        }
        match &self.signal {
            SignalSource::Markov { horizon, .. } | SignalSource::Smooth { horizon, .. } if !(*horizon > 0.0) => {
                return bad("signal.horizon", format!("must be positive, got {horizon}"));
            }
            SignalSource::Smooth { step, .. } if !(*step > 0.0) => {
                return bad("signal.step", format!("must be positive, got {step}"));
            }
            _ => {}
        }
        if let Some(ls) = &self.landscape {
            for (name, ax) in [("landscape.x", &ls.x), ("landscape.y", &ls.y)] {
                if ax.points == 0 || !ax.lo.is_finite() || !ax.hi.is_finite() || (ax.points > 1 && !(ax.hi > ax.lo)) {
                    return bad(name, "need points >= 1 and finite lo < hi".into());
                }
            }
        }
        if self.gronwall.scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("gronwall.scales", "must be finite and non-negative".into());
        }
        if self.gronwall.grid_points < 3 || self.gronwall.grid_points % 2 == 0 {
            return bad("gronwall.grid_points", "Simpson's rule needs an odd count of at least 3".into());
        }
        if self.smooth.stages == 0 {
            return bad("smooth.stages", "must be at least 1".into());
        }
        self.hades
            .validate()
            .map_err(|e| BenchError::Config(format!("field `hades`: {e}")))?;
        Ok(())
    }

    /// Resolves a path from the config against the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": "lv", "signal": {"kind": "markov", "horizon": 20}}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.optimizer, OptimizerId::Hades);
        assert_eq!(cfg.init_box, [0.25, 4.0]);
        assert_eq!(cfg.noise_sigma, 0.0);
        match cfg.signal {
            SignalSource::Markov { chain, .. } => assert_eq!(chain, MarkovChainSpec::two_state_default()),
            _ => panic!(),
        }
    }

    #[test]
    fn missing_model_names_the_field() {
        let err = ExperimentConfig::from_json(r#"{"signal": {"kind": "markov", "horizon": 20}}"#).unwrap_err();
        assert!(err.to_string().contains("`model`"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"model": "lv", "signal": {"kind": "markov", "horizon": 20}, "trails": 3}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
    }

    #[test]
    fn invariants() {
        for (patch, field) in [
            (r#""n_obs": 0"#, "n_obs"),
            (r#""trials": 0"#, "trials"),
            (r#""init_box": [4, 0.25]"#, "init_box"),
        ] {
            let text = format!(r#"{{"model": "lv", "signal": {{"kind": "markov", "horizon": 20}}, {patch}}}"#);
            let err = ExperimentConfig::from_json(&text).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn axis_grid() {
        let ax = AxisConfig {
            param: "p1".into(),
            lo: 1.0,
            hi: 3.0,
            points: 5,
        };
        assert_eq!(ax.grid(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        let one = AxisConfig { points: 1, ..ax };
        assert_eq!(one.grid(), vec![1.0]);
    }
}
