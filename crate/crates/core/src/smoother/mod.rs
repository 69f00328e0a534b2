//! Smooth approximation of a discontinuous signal by a small network.
//!
//! The network maps time to a signal value through a cosine feature layer
//! (trainable frequency, phase and amplitude per unit), a stack of dense ELU
//! layers and a single linear output:
//!
//! ```text
//! u     = 2 t / T - 1
//! h0_l  = a_l cos(ω_l u + φ_l)                l = 1..16
//! h_k   = ELU(W_k h_{k-1} + b_k)               k = 1..5
//! S̃(t)  = offset + scale (w · h_5 + β)
//! ```
//!
//! `offset` and `scale` are fixed at construction from the target signal's
//! mean and spread so that the trainable part works on O(1) values. ELU has
//! a continuous first derivative but a jump in its second at zero, so `S̃`
//! is C^1 in `t`: never discontinuous, with a bounded slope everywhere.

mod table;
mod train;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

pub use table::SmoothTable;
pub use train::{analytic_gradient_check, train_stage1, AdamState, TrainConfig};

/// Exponential linear unit: `x` for `x > 0`, `e^x - 1` otherwise.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Shape and fixed scalings of a [`SmootherNet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub features: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Right end of the time window mapped onto `[-1, 1]`.
    pub t_end: f64,
    pub value_offset: f64,
    pub value_scale: f64,
}

impl Architecture {
    /// 16 cosine features, five ELU layers of 16 units.
    pub fn standard(t_end: f64) -> Self {
        Self {
            features: 16,
            hidden_width: 16,
            hidden_layers: 5,
            t_end,
            value_offset: 0.0,
            value_scale: 1.0,
        }
    }

    pub fn param_count(&self) -> usize {
        let w = self.hidden_width;
        let mut n = 3 * self.features;
        let mut fan_in = self.features;
        for _ in 0..self.hidden_layers {
            n += w * fan_in + w;
            fan_in = w;
        }
        n + fan_in + 1
    }

    fn last_width(&self) -> usize {
        if self.hidden_layers == 0 {
            self.features
        } else {
            self.hidden_width
        }
    }

    fn validate(&self) -> Result<()> {
        if self.features == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(Error::Config("network layers must be non-empty".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config("network time window must be positive".into()));
        }
        if !(self.value_scale > 0.0) || !self.value_offset.is_finite() {
            return Err(Error::Config("invalid network value scaling".into()));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub omega: usize,
    pub phase: usize,
    pub amp: usize,
    /// `(weights, biases, fan_in)` for every hidden layer.
    pub hidden: Vec<(usize, usize, usize)>,
    pub out_w: usize,
    pub out_b: usize,
}

impl Layout {
    fn new(a: &Architecture) -> Self {
        let f = a.features;
        let mut off = 3 * f;
        let mut hidden = Vec::with_capacity(a.hidden_layers);
        let mut fan_in = f;
        for _ in 0..a.hidden_layers {
            let w = off;
            off += a.hidden_width * fan_in;
            let b = off;
            off += a.hidden_width;
            hidden.push((w, b, fan_in));
            fan_in = a.hidden_width;
        }
        let out_w = off;
        Self {
            omega: 0,
            phase: f,
            amp: 2 * f,
            hidden,
            out_w,
            out_b: out_w + fan_in,
        }
    }
}

/// The smoothing network. All entries of `params` are trainable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmootherNet {
    architecture: Architecture,
    params: Vec<f64>,
    #[serde(default)]
    optimizer: Option<AdamState>,
    #[serde(skip)]
    layout: Option<Layout>,
}

impl PartialEq for SmootherNet {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.params == other.params
            && self.optimizer == other.optimizer
    }
}

impl SmootherNet {
    /// All-zero network with the given architecture.
    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        Ok(Self {
            params: vec![0.0; architecture.param_count()],
            layout: Some(Layout::new(&architecture)),
            architecture,
            optimizer: None,
        })
    }

    /// Builds a network from explicit parameters (e.g. loaded weights).
    pub fn from_params(architecture: Architecture, params: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if params.len() != architecture.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} network parameters, got {}",
                architecture.param_count(),
                params.len()
            )));
        }
        Ok(Self {
            layout: Some(Layout::new(&architecture)),
            architecture,
            params,
            optimizer: None,
        })
    }

    /// Randomly initialized network scaled to `signal`.
    ///
    /// Frequencies are log-spaced from the fundamental of the window up to
    /// the 16th harmonic (in normalized time), phases are uniform on
    /// `[0, 2π)`, dense weights are uniform in `±1/√fan_in`, and the output
    /// starts at the signal mean.
    pub fn init_for(signal: &Signal, seed: u64) -> Result<Self> {
        Self::init_with(Architecture::standard(signal.domain_end()), signal, seed)
    }

    pub fn init_with(mut architecture: Architecture, signal: &Signal, seed: u64) -> Result<Self> {
        let mean = signal.mean();
        let sd = signal.std_dev();
        architecture.value_offset = mean;
        architecture.value_scale = if sd > 1e-12 { sd } else { mean.abs().max(1.0) };
        let mut net = Self::zeros(architecture)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lay = net.layout().clone();
        let f = architecture.features;
        let (lo, hi) = (std::f64::consts::PI, 16.0 * std::f64::consts::PI);
        for l in 0..f {
            let frac = if f > 1 { l as f64 / (f - 1) as f64 } else { 0.0 };
            net.params[lay.omega + l] = lo * (hi / lo).powf(frac);
            net.params[lay.phase + l] = rng.random_range(0.0..std::f64::consts::TAU);
            net.params[lay.amp + l] = 1.0;
        }
        for &(w, _b, fan_in) in &lay.hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in &mut net.params[w..w + architecture.hidden_width * fan_in] {
                *x = rng.random_range(-bound..bound);
            }
        }
        let last = architecture.last_width();
        let bound = 1.0 / (last as f64).sqrt();
        for x in &mut net.params[lay.out_w..lay.out_w + last] {
            *x = rng.random_range(-bound..bound);
        }
        net.params[lay.out_b] = 0.0;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layout(&mut self) -> &Layout {
        if self.layout.is_none() {
            self.layout = Some(Layout::new(&self.architecture));
        }
        self.layout.as_ref().unwrap()
    }

    pub(crate) fn layout_ref(&self) -> std::borrow::Cow<'_, Layout> {
        match &self.layout {
            Some(l) => std::borrow::Cow::Borrowed(l),
            None => std::borrow::Cow::Owned(Layout::new(&self.architecture)),
        }
    }

    pub(crate) fn optimizer_mut(&mut self) -> &mut Option<AdamState> {
        &mut self.optimizer
    }

    /// Sets the output bias, in normalized units.
    pub fn set_output_bias(&mut self, beta: f64) {
        let i = self.layout().out_b;
        self.params[i] = beta;
    }

    #[inline]
    pub(crate) fn normalize_time(&self, t: f64) -> f64 {
        2.0 * t / self.architecture.t_end - 1.0
    }

    /// Network output before the value scaling.
    fn raw_forward(&self, u: f64, lay: &Layout, buf: &mut [f64], tmp: &mut [f64]) -> f64 {
        let a = &self.architecture;
        let p = &self.params;
        let f = a.features;
        for l in 0..f {
            buf[l] = p[lay.amp + l] * (p[lay.omega + l] * u + p[lay.phase + l]).cos();
        }
        let mut width = f;
        for &(w, b, fan_in) in &lay.hidden {
            let hw = a.hidden_width;
            for r in 0..hw {
                let row = &p[w + r * fan_in..w + (r + 1) * fan_in];
                let mut z = p[b + r];
                for (wi, xi) in row.iter().zip(&buf[..fan_in]) {
                    z += wi * xi;
                }
                tmp[r] = elu(z);
            }
            buf[..hw].copy_from_slice(&tmp[..hw]);
            width = hw;
        }
        let mut y = p[lay.out_b];
        for (wi, xi) in p[lay.out_w..lay.out_w + width].iter().zip(&buf[..width]) {
            y += wi * xi;
        }
        y
    }

    /// `S̃(t)`.
    pub fn forward(&self, t: f64) -> f64 {
        let lay = self.layout_ref();
        let n = self.architecture.features.max(self.architecture.hidden_width);
        let mut buf = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let y = self.raw_forward(self.normalize_time(t), &lay, &mut buf, &mut tmp);
        self.architecture.value_offset + self.architecture.value_scale * y
    }

    /// `(S̃(t), dS̃/dt)` by forward-mode differentiation.
    pub fn forward_with_derivative(&self, t: f64) -> (f64, f64) {
        let lay = self.layout_ref();
        let a = &self.architecture;
        let p = &self.params;
        let n = a.features.max(a.hidden_width);
        let (mut h, mut dh) = (vec![0.0; n], vec![0.0; n]);
        let (mut th, mut tdh) = (vec![0.0; n], vec![0.0; n]);
        let u = self.normalize_time(t);
        let du = 2.0 / a.t_end;
        for l in 0..a.features {
            let arg = p[lay.omega + l] * u + p[lay.phase + l];
            let amp = p[lay.amp + l];
            h[l] = amp * arg.cos();
            dh[l] = -amp * arg.sin() * p[lay.omega + l] * du;
        }
        let mut width = a.features;
        for &(w, b, fan_in) in &lay.hidden {
            for r in 0..a.hidden_width {
                let row = &p[w + r * fan_in..w + (r + 1) * fan_in];
                let mut z = p[b + r];
                let mut dz = 0.0;
                for k in 0..fan_in {
                    z += row[k] * h[k];
                    dz += row[k] * dh[k];
                }
                let (act, slope) = if z > 0.0 { (z, 1.0) } else { (z.exp_m1(), z.exp()) };
                th[r] = act;
                tdh[r] = slope * dz;
            }
            h[..a.hidden_width].copy_from_slice(&th[..a.hidden_width]);
            dh[..a.hidden_width].copy_from_slice(&tdh[..a.hidden_width]);
            width = a.hidden_width;
        }
        let mut y = p[lay.out_b];
        let mut dy = 0.0;
        for k in 0..width {
            y += p[lay.out_w + k] * h[k];
            dy += p[lay.out_w + k] * dh[k];
        }
        (a.value_offset + a.value_scale * y, a.value_scale * dy)
    }

    /// Evaluates the network at many times, reusing scratch buffers.
    pub fn forward_many(&self, ts: &[f64]) -> Vec<f64> {
        let lay = self.layout_ref();
        let n = self.architecture.features.max(self.architecture.hidden_width);
        let mut buf = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        ts.iter()
            .map(|&t| {
                let y = self.raw_forward(self.normalize_time(t), &lay, &mut buf, &mut tmp);
                self.architecture.value_offset + self.architecture.value_scale * y
            })
            .collect()
    }

    /// Mean-square distance to the signal at its sample times.
    pub fn mse(&self, signal: &Signal) -> f64 {
        let pred = self.forward_many(signal.times());
        pred.iter()
            .zip(signal.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / signal.len() as f64
    }

    /// Cubic Hermite table of the network on `[0, t_end]` with `intervals`
    /// uniform cells.
    pub fn tabulate(&self, t_end: f64, intervals: usize) -> SmoothTable {
        SmoothTable::from_net(self, t_end, intervals)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut net: Self = serde_json::from_reader(f)?;
        net.architecture.validate()?;
        if net.params.len() != net.architecture.param_count() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} parameters, architecture needs {}",
                net.params.len(),
                net.architecture.param_count()
            )));
        }
        net.layout = Some(Layout::new(&net.architecture));
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.0), 2.0);
        assert_relative_eq!(elu(-1.0), (-1.0f64).exp() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(elu(-1.0), -0.6321205588285577, epsilon = 1e-15);
        // slope 1 from both sides at zero
        let h = 1e-7;
        assert_relative_eq!((elu(h) - elu(-h)) / (2.0 * h), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut net = SmootherNet::zeros(Architecture::standard(20.0)).unwrap();
        net.set_output_bias(0.37);
        for t in [-5.0, 0.0, 3.3, 20.0, 1e3] {
            assert_eq!(net.forward(t), 0.37);
        }
    }

    #[test]
    fn single_cosine_unit_through_identity_path() {
        // One feature, one hidden layer; positive pre-activations keep ELU
        // on its identity branch, so the output is an affine map of a cosine.
        let arch = Architecture {
            features: 1,
            hidden_width: 1,
            hidden_layers: 1,
            t_end: 2.0,
            value_offset: 0.0,
            value_scale: 1.0,
        };
        // [omega, phase, amp, W, b, out_w, out_b]
        let (omega, phase) = (3.0, 0.4);
        let net =
            SmootherNet::from_params(arch, vec![omega, phase, 0.5, 1.0, 1.0, 2.0, -0.25]).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.04;
            let u = t - 1.0; // 2t/2 - 1
            let expected = 2.0 * (0.5 * (omega * u + phase).cos() + 1.0) - 0.25;
            assert_relative_eq!(net.forward(t), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sig = crate::signal::sample_markov(
            &crate::signal::MarkovChainSpec::two_state_default(),
            20.0,
            5,
        )
        .unwrap();
        let net = SmootherNet::init_for(&sig, 1).unwrap();
        for &t in &[0.3, 4.0, 9.95, 10.0, 17.2] {
            let (v, d) = net.forward_with_derivative(t);
            assert_relative_eq!(v, net.forward(t), epsilon = 1e-13);
            let h = 1e-5;
            let fd = (net.forward(t + h) - net.forward(t - h)) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "t={t}: {d} vs {fd}");
        }
    }

    #[test]
    fn derivative_is_continuous_across_switches() {
        let sig = crate::signal::sample_markov(
            &crate::signal::MarkovChainSpec::two_state_default(),
            20.0,
            5,
        )
        .unwrap();
        let net = SmootherNet::init_for(&sig, 2).unwrap();
        for ts in sig.switch_times() {
            let (_, left) = net.forward_with_derivative(ts - 1e-9);
            let (_, right) = net.forward_with_derivative(ts + 1e-9);
            assert!((left - right).abs() < 1e-5 * left.abs().max(1.0));
            assert!(left.is_finite());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let sig = Signal::constant(2.0, 10.0).unwrap();
        let net = SmootherNet::init_for(&sig, 3).unwrap();
        let dir = std::env::temp_dir().join(format!("net-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.json");
        net.save_json(&path).unwrap();
        let back = SmootherNet::load_json(&path).unwrap();
        assert_eq!(net, back);
        assert_eq!(net.forward(3.3), back.forward(3.3));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn standard_architecture_size() {
        let a = Architecture::standard(1.0);
        assert_eq!(a.param_count(), 48 + 4 * (256 + 16) + (256 + 16) + 17);
    }
}
