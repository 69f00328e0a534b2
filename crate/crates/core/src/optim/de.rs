use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamped_objective, FitResult, Minimum, Problem, Termination};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeOptions {
    /// Population size per parameter.
    pub pop_factor: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub generations: usize,
    /// Stop once the population's objective spread is within
    /// `atol + tol * |mean|`.
    pub tol: f64,
    pub atol: f64,
    pub positivity_floor: f64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            pop_factor: 15,
            f: 0.8,
            cr: 0.9,
            generations: 200,
            tol: 0.01,
            atol: 0.0,
            positivity_floor: 1e-12,
        }
    }
}

/// DE/rand/1/bin with synchronous generations. When `x0` is given it
/// replaces the first random member. Out-of-bounds mutant coordinates are
/// redrawn uniformly inside the bounds.
pub fn differential_evolution(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    x0: Option<&[f64]>,
    opts: &DeOptions,
    seed: u64,
) -> Result<Minimum> {
    let d = bounds.len();
    if d == 0 || bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(Error::Config(format!("invalid bounds {bounds:?}")));
    }
    if x0.is_some_and(|x| x.len() != d) {
        return Err(Error::Dimension("initial point does not match bounds".into()));
    }
    let np = (opts.pop_factor * d).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect();
    if let Some(x) = x0 {
        pop[0] = x.to_vec();
    }
    let mut fit: Vec<f64> = pop.iter().map(|x| eval(x)).collect();
    let mut evals = np;
    let best = |fit: &[f64]| (0..fit.len()).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap();
    let mut trace = vec![fit[best(&fit)]];
    let mut generations = 0;

    let termination = loop {
        let finite: Vec<f64> = fit.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() == np {
            let mean = finite.iter().sum::<f64>() / np as f64;
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / np as f64;
            if var.sqrt() <= opts.atol + opts.tol * mean.abs() {
                break Termination::Converged;
            }
        }
        if generations >= opts.generations {
            break Termination::MaxIter;
        }
        generations += 1;

        let mut next = pop.clone();
        let mut next_fit = fit.clone();
        for i in 0..np {
            let mut pick = |avoid: &[usize]| loop {
                let r = rng.random_range(0..np);
                if !avoid.contains(&r) {
                    break r;
                }
            };
            let r1 = pick(&[i]);
            let r2 = pick(&[i, r1]);
            let r3 = pick(&[i, r1, r2]);
            let j_rand = rng.random_range(0..d);
            let trial: Vec<f64> = (0..d)
                .map(|j| {
                    if j == j_rand || rng.random::<f64>() < opts.cr {
                        let v = pop[r1][j] + opts.f * (pop[r2][j] - pop[r3][j]);
                        let (lo, hi) = bounds[j];
                        if v < lo || v > hi {
                            rng.random_range(lo..hi)
                        } else {
                            v
                        }
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let ft = eval(&trial);
            evals += 1;
            if ft <= fit[i] {
                next[i] = trial;
                next_fit[i] = ft;
            }
        }
        pop = next;
        fit = next_fit;
        trace.push(fit[best(&fit)]);
    };

    let b = best(&fit);
    Ok(Minimum {
        x: pop[b].clone(),
        f: fit[b],
        trace,
        iterations: generations,
        evaluations: evals,
        termination,
    })
}

/// Differential evolution on the loss within `bounds`.
pub fn fit_differential_evolution(
    prob: &Problem,
    bounds: &[(f64, f64)],
    p0: Option<&[f64]>,
    opts: &DeOptions,
    seed: u64,
) -> Result<FitResult> {
    if bounds.len() != prob.param_dim() {
        return Err(Error::Dimension(format!(
            "{} bounds for {} parameters",
            bounds.len(),
            prob.param_dim()
        )));
    }
    let clock = Instant::now();
    let mut f = clamped_objective(prob, opts.positivity_floor);
    Ok(differential_evolution(&mut f, bounds, p0, opts, seed)?.into_fit(
        prob,
        opts.positivity_floor,
        Some(seed),
        clock,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.3).powi(2)).sum()
    }

    #[test]
    fn sphere_in_bounds() {
        let opts = DeOptions {
            tol: 0.0,
            atol: 1e-12,
            generations: 1000,
            ..Default::default()
        };
        let m = differential_evolution(&mut sphere, &[(-5.0, 5.0); 3], None, &opts, 11).unwrap();
        assert!(m.x.iter().all(|v| (v - 0.3).abs() < 1e-4), "{m:?}");
        assert_eq!(m.termination, Termination::Converged);
    }

    #[test]
    fn deterministic_per_seed() {
        let opts = DeOptions {
            generations: 20,
            ..Default::default()
        };
        let a = differential_evolution(&mut sphere, &[(-5.0, 5.0); 2], None, &opts, 3).unwrap();
        let b = differential_evolution(&mut sphere, &[(-5.0, 5.0); 2], None, &opts, 3).unwrap();
        let c = differential_evolution(&mut sphere, &[(-5.0, 5.0); 2], None, &opts, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_empty_box() {
        assert!(differential_evolution(&mut sphere, &[(1.0, 1.0)], None, &Default::default(), 0).is_err());
    }
}
