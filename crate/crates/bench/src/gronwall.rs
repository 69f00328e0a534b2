//! How far trajectories move when the input moves: `‖y1 − y2‖ / ‖S1 − S2‖`
//! in continuous L2 over the horizon.

use std::path::Path;

use hades_core::norms::{continuous_l2, uniform_grid};
use hades_core::ode::{integrate, InputSource, IntegratorOptions, OdeModel};
use hades_core::signal::{fmt17, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::data::{draw_initial_guess, Experiment};
use crate::error::{BenchError, Result};
use crate::seeds::SeedStreams;

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallRow {
    pub epsilon: f64,
    pub input_l2: f64,
    pub state_l2: f64,
    /// `None` when the two inputs coincide.
    pub ratio: Option<f64>,
}

impl GronwallRow {
    pub fn flagged(&self) -> bool {
        self.ratio.is_none()
    }
}

/// Perturbs every sample of `signal` by `ε·u_k`, with `u_k` uniform on
/// `[-1, 1]` drawn once from `seed`, integrates both systems and compares
/// them on a `grid_points` uniform grid by Simpson's rule.
pub fn gronwall_study(
    model: &dyn OdeModel,
    p: &[f64],
    signal: &Signal,
    scales: &[f64],
    seed: u64,
    grid_points: usize,
) -> Result<Vec<GronwallRow>> {
    if grid_points < 3 || grid_points % 2 == 0 {
        return Err(BenchError::Config("grid_points must be odd and at least 3".into()));
    }
    if scales.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(BenchError::Config("perturbation scales must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Vec<f64> = (0..signal.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let t_end = signal.domain_end();
    let grid = uniform_grid(0.0, t_end, grid_points);
    let opts = IntegratorOptions::default();
    let base = integrate(model, p, InputSource::Sampled(signal), &grid, &opts)?;

    let mut rows = Vec::with_capacity(scales.len());
    for &eps in scales {
        if eps == 0.0 {
            rows.push(GronwallRow {
                epsilon: 0.0,
                input_l2: 0.0,
                state_l2: 0.0,
                ratio: None,
            });
            continue;
        }
        let other = signal.map_values(|k, v| v + eps * unit[k])?;
        let tr = integrate(model, p, InputSource::Sampled(&other), &grid, &opts)?;
        let ds: Vec<[f64; 1]> = grid.iter().map(|&t| [signal.hold(t) - other.hold(t)]).collect();
        let dy: Vec<Vec<f64>> = (0..grid.len())
            .map(|j| base.state(j).iter().zip(tr.state(j)).map(|(a, b)| a - b).collect())
            .collect();
        let input_l2 = continuous_l2(&ds, 0.0, t_end);
        let state_l2 = continuous_l2(&dy, 0.0, t_end);
        rows.push(GronwallRow {
            epsilon: eps,
            input_l2,
            state_l2,
            ratio: (input_l2 > 0.0).then(|| state_l2 / input_l2),
        });
    }
    Ok(rows)
}

/// The study at the true parameters followed by `random_params` draws from
/// the initial-guess box, all sharing one perturbation direction.
pub fn run_gronwall(exp: &Experiment, cfg: &ExperimentConfig) -> Result<Vec<(Vec<f64>, Vec<GronwallRow>)>> {
    let seeds = SeedStreams::new(cfg.seed);
    let mut ps = vec![exp.p_true.clone()];
    ps.extend(
        (1..=cfg.gronwall.random_params)
            .map(|k| draw_initial_guess(&exp.p_true, cfg.init_box, seeds.indexed(SeedStreams::GRONWALL, k as u64))),
    );
    let noise_seed = seeds.indexed(SeedStreams::GRONWALL, 0);
    ps.into_iter()
        .map(|p| {
            let rows = gronwall_study(&*exp.model, &p, &exp.signal, &cfg.gronwall.scales, noise_seed, cfg.gronwall.grid_points)?;
            Ok((p, rows))
        })
        .collect()
}

/// Max over min of the defined ratios.
pub fn ratio_spread(rows: &[GronwallRow]) -> f64 {
    let r: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// One block of rows per parameter vector.
pub fn write_csv(path: impl AsRef<Path>, param_names: &[String], blocks: &[(Vec<f64>, Vec<GronwallRow>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["param_set".to_string()];
    header.extend(param_names.iter().cloned());
    header.extend(["epsilon", "input_l2", "state_l2", "ratio", "flagged"].map(String::from));
    w.write_record(&header)?;
    for (k, (p, rows)) in blocks.iter().enumerate() {
        for r in rows {
            let mut rec = vec![k.to_string()];
            rec.extend(p.iter().map(|v| fmt17(*v)));
            rec.push(fmt17(r.epsilon));
            rec.push(fmt17(r.input_l2));
            rec.push(fmt17(r.state_l2));
            rec.push(r.ratio.map(fmt17).unwrap_or_default());
            rec.push(r.flagged().to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hades_core::models::LotkaVolterra;
    use hades_core::signal::{sample_markov, MarkovChainSpec};

    #[test]
    fn zero_perturbation_is_flagged() {
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 1).unwrap();
        let rows = gronwall_study(&LotkaVolterra::default(), &LotkaVolterra::TRUE_PARAMS, &sig, &[0.0], 0, 2001).unwrap();
        assert_eq!(rows[0].input_l2, 0.0);
        assert_eq!(rows[0].state_l2, 0.0);
        assert!(rows[0].flagged());
    }

    #[test]
    fn input_norm_scales_linearly() {
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 1).unwrap();
        let rows =
            gronwall_study(&LotkaVolterra::default(), &LotkaVolterra::TRUE_PARAMS, &sig, &[1e-3, 1e-2], 0, 2001).unwrap();
        let k = rows[1].input_l2 / rows[0].input_l2;
        assert!((k - 10.0).abs() < 1e-9, "{k}");
        assert!(rows.iter().all(|r| r.ratio.unwrap() > 0.0));
    }

    #[test]
    fn even_grid_is_rejected() {
        let sig = Signal::constant(1.0, 1.0).unwrap();
        assert!(gronwall_study(&LotkaVolterra::default(), &LotkaVolterra::TRUE_PARAMS, &sig, &[0.1], 0, 2000).is_err());
    }
}
