use serde::{Deserialize, Serialize};

use super::{Layout, SmootherNet};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Full-batch training settings for one smoothing pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, carried across warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let lr = cfg.learning_rate * b2t.sqrt() / b1t;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            params[i] -= lr * self.m[i] / (self.v[i].sqrt() + cfg.eps * b2t.sqrt());
        }
    }
}

/// Scratch space for one sample's forward/backward pass.
struct Workspace {
    /// Activations: row 0 is the cosine layer, row k the k-th hidden layer.
    acts: Vec<f64>,
    cos_arg: Vec<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    stride: usize,
}

impl Workspace {
    fn new(net: &SmootherNet) -> Self {
        let a = net.architecture();
        let stride = a.features.max(a.hidden_width);
        Self {
            acts: vec![0.0; stride * (a.hidden_layers + 1)],
            cos_arg: vec![0.0; a.features],
            delta: vec![0.0; stride],
            delta_prev: vec![0.0; stride],
            stride,
        }
    }
}

/// Raw (pre-scaling) output for normalized time `u`, caching activations.
fn forward_cached(p: &[f64], net: &SmootherNet, lay: &Layout, u: f64, ws: &mut Workspace) -> f64 {
    let a = net.architecture();
    let s = ws.stride;
    for l in 0..a.features {
        let arg = p[lay.omega + l] * u + p[lay.phase + l];
        ws.cos_arg[l] = arg;
        ws.acts[l] = p[lay.amp + l] * arg.cos();
    }
    let mut width = a.features;
    for (k, &(w, b, fan_in)) in lay.hidden.iter().enumerate() {
        let (prev, next) = ws.acts.split_at_mut((k + 1) * s);
        let input = &prev[k * s..k * s + fan_in];
        for r in 0..a.hidden_width {
            let row = &p[w + r * fan_in..w + (r + 1) * fan_in];
            let mut z = p[b + r];
            for (wi, xi) in row.iter().zip(input) {
                z += wi * xi;
            }
            next[r] = if z > 0.0 { z } else { z.exp_m1() };
        }
        width = a.hidden_width;
    }
    let last = &ws.acts[lay.hidden.len() * s..lay.hidden.len() * s + width];
    let mut y = p[lay.out_b];
    for (wi, xi) in p[lay.out_w..lay.out_w + width].iter().zip(last) {
        y += wi * xi;
    }
    y
}

/// Accumulates `dy_coef * ∂y/∂θ` into `grad` using cached activations.
fn backward(p: &[f64], net: &SmootherNet, lay: &Layout, u: f64, dy: f64, ws: &mut Workspace, grad: &mut [f64]) {
    let a = net.architecture();
    let s = ws.stride;
    let n_hidden = lay.hidden.len();
    let width = if n_hidden == 0 { a.features } else { a.hidden_width };
    {
        let last = &ws.acts[n_hidden * s..n_hidden * s + width];
        for k in 0..width {
            grad[lay.out_w + k] += dy * last[k];
            ws.delta[k] = dy * p[lay.out_w + k];
        }
        grad[lay.out_b] += dy;
    }
    for (k, &(w, b, fan_in)) in lay.hidden.iter().enumerate().rev() {
        let out = &ws.acts[(k + 1) * s..(k + 1) * s + a.hidden_width];
        let input = &ws.acts[k * s..k * s + fan_in];
        for x in &mut ws.delta_prev[..fan_in] {
            *x = 0.0;
        }
        for r in 0..a.hidden_width {
            let act = out[r];
            let slope = if act > 0.0 { 1.0 } else { act + 1.0 };
            let dz = ws.delta[r] * slope;
            grad[b + r] += dz;
            let row = &p[w + r * fan_in..w + (r + 1) * fan_in];
            let grow = &mut grad[w + r * fan_in..w + (r + 1) * fan_in];
            for c in 0..fan_in {
                grow[c] += dz * input[c];
                ws.delta_prev[c] += dz * row[c];
            }
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
    }
    for l in 0..a.features {
        let d = ws.delta[l];
        let arg = ws.cos_arg[l];
        let amp = p[lay.amp + l];
        grad[lay.amp + l] += d * arg.cos();
        let darg = -d * amp * arg.sin();
        grad[lay.omega + l] += darg * u;
        grad[lay.phase + l] += darg;
    }
}

/// Mean-square loss against `signal` and its gradient with respect to every
/// network parameter, both in signal units.
pub(crate) fn loss_and_gradient(net: &SmootherNet, signal: &Signal, grad: &mut [f64]) -> f64 {
    let lay = net.layout_ref();
    let arch = *net.architecture();
    let p = net.params();
    let mut ws = Workspace::new(net);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let m = signal.len() as f64;
    let mut loss = 0.0;
    for (&t, &target) in signal.times().iter().zip(signal.values()) {
        let u = net.normalize_time(t);
        let y = forward_cached(p, net, &lay, u, &mut ws);
        let pred = arch.value_offset + arch.value_scale * y;
        let e = pred - target;
        loss += e * e;
        backward(p, net, &lay, u, 2.0 * e * arch.value_scale / m, &mut ws, grad);
    }
    loss / m
}

/// Trains `net` on `signal` for `cfg.epochs` full-batch Adam steps, starting
/// from the given weights (and optimizer moments, if present). Returns the
/// updated network and the per-epoch loss, each measured before that
/// epoch's update.
pub fn train_stage1(
    mut net: SmootherNet,
    signal: &Signal,
    cfg: &TrainConfig,
) -> Result<(SmootherNet, Vec<f64>)> {
    cfg.validate()?;
    if signal.len() < 2 {
        return Err(Error::Config(
            "smoothing needs a signal with at least two samples".into(),
        ));
    }
    let n = net.params().len();
    let mut adam = net
        .optimizer_mut()
        .take()
        .filter(|s| s.m.len() == n)
        .unwrap_or_else(|| AdamState::new(n));
    let mut grad = vec![0.0; n];
    let norm = 1.0 / (net.architecture().value_scale * net.architecture().value_scale);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = loss_and_gradient(&net, signal, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { epoch, loss });
        }
        trace.push(loss);
        grad.iter_mut().for_each(|g| *g *= norm);
        adam.update(net.params_mut(), &grad, cfg);
    }
    *net.optimizer_mut() = Some(adam);
    Ok((net, trace))
}

/// Largest relative discrepancy between the backpropagated gradient and a
/// central finite-difference estimate (step `1e-5`), over all parameters.
/// The denominator is `max(|analytic|, 1e-8)`.
pub fn analytic_gradient_check(net: &SmootherNet, signal: &Signal) -> f64 {
    let n = net.params().len();
    let mut grad = vec![0.0; n];
    loss_and_gradient(net, signal, &mut grad);
    let h = 1e-5;
    let targets = signal.values();
    let m = signal.len() as f64;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus = probe.forward_many(signal.times());
        probe.params_mut()[i] = orig - h;
        let minus = probe.forward_many(signal.times());
        probe.params_mut()[i] = orig;
        // (e+² - e-²) = (e+ - e-)(e+ + e-), avoiding a difference of sums.
        let mut diff = 0.0;
        for k in 0..plus.len() {
            let ep = plus[k] - targets[k];
            let em = minus[k] - targets[k];
            diff += (plus[k] - minus[k]) * (ep + em);
        }
        let fd = diff / m / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_markov, MarkovChainSpec};
    use crate::smoother::Architecture;

    fn markov() -> Signal {
        sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 11).unwrap()
    }

    #[test]
    fn rejects_zero_epochs() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let sig = markov();
        let net = SmootherNet::init_for(&sig, 0).unwrap();
        assert!(matches!(train_stage1(net, &sig, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_single_sample_signal() {
        let sig = Signal::constant(1.0, 5.0).unwrap();
        let net = SmootherNet::init_for(&sig, 0).unwrap();
        assert!(train_stage1(net, &sig, &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 5.0, 3).unwrap();
        for seed in 0..3 {
            let net = SmootherNet::init_for(&sig, seed).unwrap();
            let err = analytic_gradient_check(&net, &sig);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_network_gradient_check() {
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 5.0, 3).unwrap();
        let mut net = SmootherNet::zeros(Architecture::standard(5.0)).unwrap();
        net.set_output_bias(0.2);
        assert!(analytic_gradient_check(&net, &sig) < 1e-5);
    }

    #[test]
    fn output_bias_gradient_doubles_with_target() {
        // At the zero network the prediction is the bias β, so
        // ∂L/∂β = (2/M) Σ (β - S_i). With β = 0, doubling S doubles it.
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 5.0, 3).unwrap();
        let doubled = sig.map_values(|_, v| 2.0 * v + 0.0).unwrap();
        let net = SmootherNet::zeros(Architecture::standard(5.0)).unwrap();
        let n = net.params().len();
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        loss_and_gradient(&net, &sig, &mut g1);
        loss_and_gradient(&net, &doubled, &mut g2);
        let b = n - 1;
        let expected = -2.0 * sig.mean();
        assert!((g1[b] - expected).abs() < 1e-12);
        assert!((g2[b] - 2.0 * g1[b]).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_fitted() {
        let sig = Signal::sampled_from_fn(|_| 0.7, 0.1, 20.0).unwrap();
        let net = SmootherNet::init_for(&sig, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 1500,
            ..Default::default()
        };
        let (net, trace) = train_stage1(net, &sig, &cfg).unwrap();
        assert_eq!(trace.len(), 1500);
        let mse = net.mse(&sig);
        assert!(mse < 1e-6, "mse {mse}");
    }

    #[test]
    fn warm_start_keeps_optimizer_state() {
        let sig = markov();
        let net = SmootherNet::init_for(&sig, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            ..Default::default()
        };
        let (net, first) = train_stage1(net, &sig, &cfg).unwrap();
        let (_, second) = train_stage1(net, &sig, &cfg).unwrap();
        assert!(second[0] <= first[0]);
        // Continuing from where the first call left off.
        assert!((second[0] - first[49]).abs() < 0.1 * first[49]);
    }
}
