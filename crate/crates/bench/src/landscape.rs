//! Loss over a two-parameter grid.

use std::path::Path;

use hades_core::ode::{InputSource, IntegratorOptions, OdeModel};
use hades_core::optim::{Observations, Problem};
use hades_core::signal::fmt17;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::Experiment;
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub names: (String, String),
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row `i` holds `axis1[i]` against every `axis2[j]`.
    pub values: Vec<f64>,
}

impl Landscape {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    /// `(i, j, loss)` of the smallest cell.
    pub fn argmin(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
        (k / self.axis2.len(), k % self.axis2.len(), v)
    }

    /// Mean of `|f[i+1] - 2 f[i] + f[i-1]|` along both axes.
    pub fn mean_abs_second_difference(&self) -> f64 {
        let (n1, n2) = (self.axis1.len(), self.axis2.len());
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n1 {
            for j in 0..n2 {
                if i > 0 && i + 1 < n1 {
                    sum += (self.at(i + 1, j) - 2.0 * self.at(i, j) + self.at(i - 1, j)).abs();
                    count += 1;
                }
                if j > 0 && j + 1 < n2 {
                    sum += (self.at(i, j + 1) - 2.0 * self.at(i, j) + self.at(i, j - 1)).abs();
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// First row: corner label then the second axis; each later row starts
    /// with its first-axis value.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![format!("{}\\{}", self.names.0, self.names.1)];
        header.extend(self.axis2.iter().map(|v| fmt17(*v)));
        w.write_record(&header)?;
        for (i, a) in self.axis1.iter().enumerate() {
            let mut row = vec![fmt17(*a)];
            row.extend((0..self.axis2.len()).map(|j| fmt17(self.at(i, j))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The grid described by the `landscape` block of `cfg`, other parameters at
/// their true values.
pub fn run_landscape(exp: &Experiment, cfg: &ExperimentConfig) -> Result<Landscape> {
    let ls = cfg
        .landscape
        .as_ref()
        .ok_or_else(|| BenchError::Config("field `landscape` is required for this command".into()))?;
    let i = exp.param_index(&ls.x.param)?;
    let j = exp.param_index(&ls.y.param)?;
    loss_landscape(
        &*exp.model,
        InputSource::Sampled(&exp.signal),
        &exp.obs,
        (i, &ls.x.grid()),
        (j, &ls.y.grid()),
        &exp.p_true,
        cfg.integrator,
    )
}

/// Loss on the grid `axis1 × axis2`, other parameters at `p_fixed`.
/// Cells where integration fails hold the loss sentinel.
#[allow(clippy::too_many_arguments)]
pub fn loss_landscape(
    model: &dyn OdeModel,
    input: InputSource,
    obs: &Observations,
    axis1: (usize, &[f64]),
    axis2: (usize, &[f64]),
    p_fixed: &[f64],
    integrator: IntegratorOptions,
) -> Result<Landscape> {
    let dp = model.param_dim();
    if p_fixed.len() != dp {
        return Err(BenchError::Config(format!("need {dp} fixed parameters, got {}", p_fixed.len())));
    }
    if axis1.0 >= dp || axis2.0 >= dp || axis1.0 == axis2.0 {
        return Err(BenchError::Config("landscape axes must be two distinct parameters".into()));
    }
    if axis1.1.iter().chain(axis2.1).any(|v| !v.is_finite()) {
        return Err(BenchError::Config("landscape grids must be finite".into()));
    }
    let prob = Problem::new(model, input, obs)?.with_integrator(integrator);
    let n2 = axis2.1.len();
    let values: Vec<f64> = (0..axis1.1.len() * n2)
        .into_par_iter()
        .map(|k| {
            let mut p = p_fixed.to_vec();
            p[axis1.0] = axis1.1[k / n2];
            p[axis2.0] = axis2.1[k % n2];
            prob.loss(&p)
        })
        .collect();
    let names = model.param_names();
    Ok(Landscape {
        names: (names[axis1.0].clone(), names[axis2.0].clone()),
        axis1: axis1.1.to_vec(),
        axis2: axis2.1.to_vec(),
        values,
    })
}
