use crate::ode::OdeModel;

/// Predator–prey dynamics where the signal modulates prey growth:
///
/// `y1' = p1 s y1 - p3 y1 y2`, `y2' = -p2 y2 + p4 y1 y2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LotkaVolterra {
    pub y0: [f64; 2],
}

impl LotkaVolterra {
    pub const TRUE_PARAMS: [f64; 4] = [2.0, 0.5, 1.0, 1.0];
}

impl Default for LotkaVolterra {
    fn default() -> Self {
        Self { y0: [1.0, 1.0] }
    }
}

impl OdeModel for LotkaVolterra {
    fn name(&self) -> &str {
        "lv"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn initial_state(&self) -> Vec<f64> {
        self.y0.to_vec()
    }
    fn param_names(&self) -> Vec<String> {
        ["p1", "p2", "p3", "p4"].map(String::from).to_vec()
    }
    fn nominal_params(&self) -> Vec<f64> {
        Self::TRUE_PARAMS.to_vec()
    }

    fn rhs(&self, _t: f64, y: &[f64], p: &[f64], s: f64, dy: &mut [f64]) {
        dy[0] = p[0] * s * y[0] - p[2] * y[0] * y[1];
        dy[1] = -p[1] * y[1] + p[3] * y[0] * y[1];
    }

    fn jac_y(&self, _t: f64, y: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
        out[0] = p[0] * s - p[2] * y[1];
        out[1] = -p[2] * y[0];
        out[2] = p[3] * y[1];
        out[3] = -p[1] + p[3] * y[0];
    }

    fn jac_p(&self, _t: f64, y: &[f64], _p: &[f64], s: f64, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = s * y[0];
        out[2] = -y[0] * y[1];
        out[4 + 1] = -y[1];
        out[4 + 3] = y[0] * y[1];
    }
}
