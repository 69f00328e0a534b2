use std::f64::consts::PI;

use crate::ode::OdeModel;

/// Light-driven van der Pol pacemaker with a photoreceptor pool.
///
/// State `(x, xc, n)`, estimated parameters `(tau_c, gamma, G, k)`, time in
/// hours and light in lux.
#[derive(Debug, Clone, PartialEq)]
pub struct Circadian {
    pub alpha0: f64,
    pub b: f64,
    pub beta: f64,
    pub i0: f64,
    pub p: f64,
    pub kappa: f64,
    pub f: f64,
    pub y0: [f64; 3],
}

impl Circadian {
    pub const TRUE_PARAMS: [f64; 4] = [20.0, 0.23, 20.0, 0.55];

    /// Light-driven activation rate `alpha0 (s/I0)^p`. Negative light is
    /// treated as darkness.
    pub fn alpha(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.alpha0 * (s / self.i0).powf(self.p)
        }
    }
}

impl Default for Circadian {
    fn default() -> Self {
        Self {
            alpha0: 0.16,
            b: 0.4,
            beta: 0.0075,
            i0: 9500.0,
            p: 0.6,
            kappa: 12.0 / PI,
            f: 0.99669,
            // Midnight state of a 24.2 h oscillator entrained to 1000 lux from
            // 07:00 to 23:00.
            y0: [-0.5064, -0.9277, 0.5399],
        }
    }
}

impl OdeModel for Circadian {
    fn name(&self) -> &str {
        "circadian"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn initial_state(&self) -> Vec<f64> {
        self.y0.to_vec()
    }
    fn param_names(&self) -> Vec<String> {
        ["tau_c", "gamma", "G", "k"].map(String::from).to_vec()
    }
    fn nominal_params(&self) -> Vec<f64> {
        Self::TRUE_PARAMS.to_vec()
    }
    fn input_range(&self) -> (f64, f64) {
        (0.0, 10_000.0)
    }

    fn rhs(&self, _t: f64, y: &[f64], p: &[f64], s: f64, dy: &mut [f64]) {
        let [x, xc, n] = [y[0], y[1], y[2]];
        let [tau, gamma, g, k] = [p[0], p[1], p[2], p[3]];
        let a = self.alpha(s);
        let drive = g * a * (1.0 - n) * (1.0 - self.b * x) * (1.0 - self.b * xc);
        let w = (24.0 / (self.f * tau)).powi(2);
        dy[0] = (xc + drive) / self.kappa;
        dy[1] = (gamma * (xc - 4.0 / 3.0 * xc.powi(3)) - x * (w + k * drive)) / self.kappa;
        dy[2] = 60.0 * (a * (1.0 - n) - self.beta * n);
    }

    fn jac_y(&self, _t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
        let [x, xc, n] = [y[0], y[1], y[2]];
        let [tau, gamma, g, k] = [p[0], p[1], p[2], p[3]];
        let a = self.alpha(s);
        let (u, v) = (1.0 - self.b * x, 1.0 - self.b * xc);
        let base = g * a * (1.0 - n);
        let drive = base * u * v;
        let d_x = -self.b * base * v;
        let d_xc = -self.b * base * u;
        let d_n = -g * a * u * v;
        let w = (24.0 / (self.f * tau)).powi(2);
        let ik = 1.0 / self.kappa;
        out[0] = d_x * ik;
        out[1] = (1.0 + d_xc) * ik;
        out[2] = d_n * ik;
        out[3] = (-(w + k * drive) - x * k * d_x) * ik;
        out[4] = (gamma * (1.0 - 4.0 * xc * xc) - x * k * d_xc) * ik;
        out[5] = -x * k * d_n * ik;
        out[6] = 0.0;
        out[7] = 0.0;
        out[8] = -60.0 * (a + self.beta);
    }

    fn jac_p(&self, _t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
        let [x, xc, n] = [y[0], y[1], y[2]];
        let [tau, _gamma, g, k] = [p[0], p[1], p[2], p[3]];
        let a = self.alpha(s);
        let per_gain = a * (1.0 - n) * (1.0 - self.b * x) * (1.0 - self.b * xc);
        let drive = g * per_gain;
        let w = (24.0 / (self.f * tau)).powi(2);
        let ik = 1.0 / self.kappa;
        out.fill(0.0);
        out[2] = per_gain * ik;
        out[4] = 2.0 * x * w / tau * ik;
        out[5] = (xc - 4.0 / 3.0 * xc.powi(3)) * ik;
        out[6] = -x * k * per_gain * ik;
        out[7] = -x * drive * ik;
    }
}
