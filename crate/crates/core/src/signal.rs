//! Discontinuous external signals with zero-order-hold semantics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled signal, held constant between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    times: Vec<f64>,
    values: Vec<f64>,
    domain_end: f64,
}

/// A maximal interval on which the signal is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

impl Signal {
    pub fn new(times: Vec<f64>, values: Vec<f64>, domain_end: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSignal("at least one sample is required".into()));
        }
        if times.len() != values.len() {
            return Err(Error::InvalidSignal(format!(
                "{} timestamps but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidSignal(format!(
                "first timestamp must be 0, got {}",
                times[0]
            )));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSignal(format!(
                "timestamps not strictly increasing at index {}",
                k + 1
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite value at index {k}")));
        }
        let last = *times.last().unwrap();
        if !domain_end.is_finite() || domain_end < last {
            return Err(Error::InvalidSignal(format!(
                "domain end {domain_end} precedes last timestamp {last}"
            )));
        }
        Ok(Self {
            times,
            values,
            domain_end,
        })
    }

    pub fn constant(value: f64, domain_end: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], domain_end)
    }

    /// Samples `f` every `step` time units on `[0, horizon]`.
    pub fn sampled_from_fn(f: impl Fn(f64) -> f64, step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidSignal("step and horizon must be positive".into()));
        }
        let n = grid_count(horizon, step);
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain_end(&self) -> f64 {
        self.domain_end
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Zero-order-hold value at `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.domain_end) {
            return Err(Error::Domain {
                t,
                end: self.domain_end,
            });
        }
        Ok(self.hold(t))
    }

    /// Zero-order-hold lookup without the domain check; clamps to the first
    /// sample for `t < 0`.
    pub fn hold(&self, t: f64) -> f64 {
        let j = self.times.partition_point(|&x| x <= t);
        self.values[j.saturating_sub(1)]
    }

    /// Maximal constant pieces covering `[0, domain_end]`. Adjacent samples
    /// carrying the same value are merged.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut out: Vec<Piece> = Vec::new();
        for (k, (&t, &v)) in self.times.iter().zip(&self.values).enumerate() {
            let end = self.times.get(k + 1).copied().unwrap_or(self.domain_end);
            match out.last_mut() {
                Some(p) if p.value == v => p.end = end,
                _ => out.push(Piece {
                    start: t,
                    end,
                    value: v,
                }),
            }
        }
        // A final sample placed exactly at the domain end yields an empty piece.
        if out.len() > 1 && out.last().is_some_and(|p| p.end <= p.start) {
            out.pop();
        }
        out
    }

    /// Times in `(0, domain_end)` at which the held value changes.
    pub fn switch_times(&self) -> Vec<f64> {
        self.pieces().iter().skip(1).map(|p| p.start).collect()
    }

    /// Re-samples the held signal on a new grid (which must start at 0).
    pub fn resample(&self, grid: &[f64]) -> Result<Self> {
        let values = grid.iter().map(|&t| self.evaluate(t)).collect::<Result<_>>()?;
        Self::new(grid.to_vec(), values, self.domain_end)
    }

    /// The same held function with every sample interval split into
    /// `factor` equal parts.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Config("refinement factor must be at least 1".into()));
        }
        let mut times = Vec::with_capacity(self.times.len() * factor);
        let mut values = Vec::with_capacity(self.times.len() * factor);
        for (k, (&t, &v)) in self.times.iter().zip(&self.values).enumerate() {
            let end = self.times.get(k + 1).copied().unwrap_or(self.domain_end);
            let parts = if end > t { factor } else { 1 };
            let h = (end - t) / parts as f64;
            for j in 0..parts {
                times.push(t + h * j as f64);
                values.push(v);
            }
        }
        Self::new(times, values, self.domain_end)
    }

    /// New signal with `f` applied to every sample value.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let values = self.values.iter().enumerate().map(|(k, &v)| f(k, v)).collect();
        Self::new(self.times.clone(), values, self.domain_end)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64)
            .sqrt()
    }

    /// Reads a two-column `time,value` CSV with a header row. The domain
    /// ends at the last timestamp unless `domain_end` is given.
    pub fn read_csv(path: impl AsRef<Path>, domain_end: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 {
            return Err(Error::InvalidSignal(format!(
                "expected 2 columns (time,value), found {}",
                headers.len()
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidSignal(format!("line {}: cannot parse `{s}`", line + 2))
                })
            };
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        let end = domain_end.unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
        Self::new(times, values, end)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([fmt17(*t), fmt17(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Formats with 17 significant digits, enough to round-trip an f64.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

fn grid_count(horizon: f64, step: f64) -> usize {
    (horizon / step + 1e-9).floor() as usize
}

/// A discrete-time Markov chain over signal levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainSpec {
    pub states: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// Time units per transition.
    pub step: f64,
    pub initial_state_index: usize,
}

impl MarkovChainSpec {
    /// Two-state chain on {0, 1} that stays put with probability 0.95,
    /// starting from state 1.
    pub fn two_state_default() -> Self {
        Self {
            states: vec![0.0, 1.0],
            transition: vec![vec![0.95, 0.05], vec![0.05, 0.95]],
            step: 0.1,
            initial_state_index: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Config("Markov chain needs at least one state".into()));
        }
        for (i, a) in self.states.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("state {i} is not finite")));
            }
            if self.states[..i].contains(a) {
                return Err(Error::Config(format!("state level {a} is repeated")));
            }
        }
        if self.transition.len() != n || self.transition.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("transition matrix must be {n}x{n}")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Config(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("row {i} sums to {sum}, not 1")));
            }
        }
        if !(self.step > 0.0) {
            return Err(Error::Config("Markov step must be positive".into()));
        }
        if self.initial_state_index >= n {
            return Err(Error::Config(format!(
                "initial state index {} out of range for {n} states",
                self.initial_state_index
            )));
        }
        Ok(())
    }

    /// Runs the chain for `n_steps` transitions, returning visited state
    /// indices (length `n_steps + 1`).
    pub fn simulate_indices(&self, n_steps: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = Vec::with_capacity(n_steps + 1);
        let mut cur = self.initial_state_index;
        idx.push(cur);
        for _ in 0..n_steps {
            let u: f64 = rng.random();
            let row = &self.transition[cur];
            let mut acc = 0.0;
            let mut next = row.len() - 1;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            cur = next;
            idx.push(cur);
        }
        idx
    }
}

/// Samples a Markov-switching signal on `[0, horizon]` at the chain's step.
pub fn sample_markov(spec: &MarkovChainSpec, horizon: f64, seed: u64) -> Result<Signal> {
    spec.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let n = grid_count(horizon, spec.step);
    let idx = spec.simulate_indices(n, seed);
    let times = (0..=n).map(|k| k as f64 * spec.step).collect();
    let values = idx.iter().map(|&i| spec.states[i]).collect();
    Signal::new(times, values, horizon)
}

/// A daily light/dark schedule, repeated for a number of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSchedule {
    pub days: usize,
    pub lux_on: f64,
    pub lux_off: f64,
    /// Clock-hour intervals `[start, end)` with lights on.
    pub on_hours: Vec<(f64, f64)>,
    /// Sampling grid in hours.
    #[serde(default = "default_light_step")]
    pub step_hours: f64,
    /// Each interval boundary moves by up to this many hours per day.
    #[serde(default)]
    pub jitter_hours: f64,
    #[serde(default)]
    pub jitter_seed: u64,
}

fn default_light_step() -> f64 {
    0.1
}

impl LightSchedule {
    pub fn new(days: usize, lux_on: f64, lux_off: f64, on_hours: Vec<(f64, f64)>) -> Self {
        Self {
            days,
            lux_on,
            lux_off,
            on_hours,
            step_hours: default_light_step(),
            jitter_hours: 0.0,
            jitter_seed: 0,
        }
    }

    pub fn with_jitter(mut self, hours: f64, seed: u64) -> Self {
        self.jitter_hours = hours;
        self.jitter_seed = seed;
        self
    }

    fn validate(&self) -> Result<Vec<(f64, f64)>> {
        if self.days == 0 {
            return Err(Error::Config("light schedule needs at least one day".into()));
        }
        if !(self.lux_on >= 0.0) || !(self.lux_off >= 0.0) {
            return Err(Error::Config("lux values must be non-negative".into()));
        }
        if !(self.step_hours > 0.0) {
            return Err(Error::Config("light grid step must be positive".into()));
        }
        if !(self.jitter_hours >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        let mut iv = self.on_hours.clone();
        for &(a, b) in &iv {
            if !(0.0..24.0).contains(&a) || !(b > a && b <= 24.0) {
                return Err(Error::Config(format!(
                    "light interval [{a}, {b}) must satisfy 0 <= start < end <= 24"
                )));
            }
        }
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in iv.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Config(format!(
                    "light intervals [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(iv)
    }
}

/// Piecewise-constant light profile standing in for a wearable recording.
pub fn synthetic_light_schedule(schedule: &LightSchedule) -> Result<Signal> {
    let intervals = schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.jitter_seed);
    let j = schedule.jitter_hours;
    // Absolute on-intervals, jittered per day.
    let mut on: Vec<(f64, f64)> = Vec::with_capacity(schedule.days * intervals.len());
    for day in 0..schedule.days {
        let base = 24.0 * day as f64;
        for &(a, b) in &intervals {
            let (da, db) = if j > 0.0 {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            };
            on.push((base + a + da, base + b + db));
        }
    }
    let horizon = 24.0 * schedule.days as f64;
    let n = grid_count(horizon, schedule.step_hours);
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * schedule.step_hours).collect();
    let values = times
        .iter()
        .map(|&t| {
            if on.iter().any(|&(a, b)| t >= a && t < b) {
                schedule.lux_on
            } else {
                schedule.lux_off
            }
        })
        .collect();
    Signal::new(times, values, horizon)
}
