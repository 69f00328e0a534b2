use std::path::Path;

use super::dopri::{Dopri5, IntegratorOptions};
use super::model::OdeModel;
use crate::error::{Error, Result};
use crate::signal::{fmt17, Signal};
use crate::smoother::{SmoothTable, SmootherNet};

/// The external signal fed to a model.
#[derive(Debug, Clone, Copy)]
pub enum InputSource<'a> {
    /// Zero-order hold of a sampled signal. Integration restarts at every
    /// switch so no step straddles a discontinuity.
    Sampled(&'a Signal),
    /// A smoothing network evaluated directly.
    Network(&'a SmootherNet),
    /// A smoothing network frozen into a Hermite table.
    Table(&'a SmoothTable),
}

impl InputSource<'_> {
    pub fn domain_end(&self) -> f64 {
        match self {
            InputSource::Sampled(s) => s.domain_end(),
            InputSource::Network(n) => n.architecture().t_end,
            InputSource::Table(t) => t.t_end(),
        }
    }

    /// Signal value at `t` (zero-order hold for sampled inputs).
    pub fn value(&self, t: f64) -> f64 {
        match self {
            InputSource::Sampled(s) => s.hold(t),
            InputSource::Network(n) => n.forward(t),
            InputSource::Table(tab) => tab.evaluate(t),
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, InputSource::Sampled(_))
    }
}

/// States (and optionally parameter sensitivities) at requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    state_dim: usize,
    param_dim: usize,
    states: Vec<f64>,
    sensitivities: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.state_dim..(j + 1) * self.state_dim]
    }

    /// `∂y_i/∂p_k` at time index `j`, row-major `D_y × D_p`.
    pub fn sensitivity(&self, j: usize) -> Option<&[f64]> {
        let block = self.state_dim * self.param_dim;
        self.sensitivities
            .as_ref()
            .map(|z| &z[j * block..(j + 1) * block])
    }

    pub fn has_sensitivities(&self) -> bool {
        self.sensitivities.is_some()
    }

    /// Writes `t, y1..yD` and, when present, `z_i_j` columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("y{i}")));
        if self.has_sensitivities() {
            for i in 1..=self.state_dim {
                header.extend((1..=self.param_dim).map(|j| format!("z_{i}_{j}")));
            }
        }
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut row = vec![fmt17(self.times[j])];
            row.extend(self.state(j).iter().map(|v| fmt17(*v)));
            if let Some(z) = self.sensitivity(j) {
                row.extend(z.iter().map(|v| fmt17(*v)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate(model: &dyn OdeModel, p: &[f64], input: &InputSource, t_eval: &[f64]) -> Result<()> {
    if p.len() != model.param_dim() {
        return Err(Error::Dimension(format!(
            "model `{}` has {} parameters, got {}",
            model.name(),
            model.param_dim(),
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite parameters {p:?}")));
    }
    if t_eval.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("evaluation times must be strictly increasing".into()));
    }
    let end = input.domain_end();
    if let Some(&t) = t_eval.iter().find(|&&t| !(t >= 0.0 && t <= end)) {
        return Err(Error::Domain { t, end });
    }
    Ok(())
}

/// Solves the model at `t_eval` with the given input.
pub fn integrate(
    model: &dyn OdeModel,
    p: &[f64],
    input: InputSource,
    t_eval: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    solve(model, p, input, t_eval, opts, false)
}

/// Solves the model together with the forward sensitivity equations
/// `ż_ij = ∂F_i/∂p_j + Σ_k ∂F_i/∂y_k z_kj`, `z(0) = 0`.
///
/// Step sizes are chosen from the state alone, so the returned states are
/// bit-identical to those of [`integrate`].
pub fn integrate_with_sensitivities(
    model: &dyn OdeModel,
    p: &[f64],
    input: InputSource,
    t_eval: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    solve(model, p, input, t_eval, opts, true)
}

fn solve(
    model: &dyn OdeModel,
    p: &[f64],
    input: InputSource,
    t_eval: &[f64],
    opts: &IntegratorOptions,
    with_sens: bool,
) -> Result<Trajectory> {
    validate(model, p, &input, t_eval)?;
    let dy = model.state_dim();
    let dp = model.param_dim();
    let n = if with_sens { dy * (1 + dp) } else { dy };
    let mut x = vec![0.0; n];
    x[..dy].copy_from_slice(&model.initial_state());

    let mut out = vec![0.0; t_eval.len() * n];
    let mut filled = vec![false; t_eval.len()];
    let mut record = |j: usize, v: &[f64]| {
        out[j * n..(j + 1) * n].copy_from_slice(v);
        filled[j] = true;
    };
    // Requested times at the origin are the initial condition itself.
    for (j, &t) in t_eval.iter().enumerate() {
        if t == 0.0 {
            record(j, &x);
        }
    }

    let t_final = t_eval.last().copied().unwrap_or(0.0);
    let mut stepper = Dopri5::with_error_dim(n, dy);
    let mut jy = vec![0.0; dy * dy];
    let mut jp = vec![0.0; dy * dp];
    let mut hint = None;

    let mut run_piece = |a: f64, b: f64, sig: &dyn Fn(f64) -> f64, x: &mut [f64], hint: Option<f64>, record: &mut dyn FnMut(usize, &[f64])| {
        if with_sens {
            let mut f = |t: f64, st: &[f64], ds: &mut [f64]| {
                let s = sig(t);
                let (y, z) = st.split_at(dy);
                let (dyv, dz) = ds.split_at_mut(dy);
                model.rhs(t, y, p, s, dyv);
                model.jac_y(t, y, p, s, &mut jy);
                model.jac_p(t, y, p, s, &mut jp);
                for i in 0..dy {
                    for j in 0..dp {
                        let mut acc = jp[i * dp + j];
                        for k in 0..dy {
                            acc += jy[i * dy + k] * z[k * dp + j];
                        }
                        dz[i * dp + j] = acc;
                    }
                }
            };
            stepper.integrate(&mut f, a, b, x, t_eval, |j, v| record(j, v), hint, opts)
        } else {
            let mut f = |t: f64, st: &[f64], ds: &mut [f64]| model.rhs(t, st, p, sig(t), ds);
            stepper.integrate(&mut f, a, b, x, t_eval, |j, v| record(j, v), hint, opts)
        }
    };

    if t_final > 0.0 {
        match input {
            InputSource::Sampled(signal) => {
                for piece in signal.pieces() {
                    if piece.start >= t_final {
                        break;
                    }
                    let b = piece.end.min(t_final);
                    let v = piece.value;
                    hint = Some(run_piece(piece.start, b, &|_| v, &mut x, hint, &mut record)?);
                }
            }
            InputSource::Network(net) => {
                run_piece(0.0, t_final, &|t| net.forward(t), &mut x, None, &mut record)?;
            }
            InputSource::Table(tab) => {
                run_piece(0.0, t_final, &|t| tab.evaluate(t), &mut x, None, &mut record)?;
            }
        }
    }
    if let Some(j) = filled.iter().position(|f| !f) {
        return Err(Error::Integration {
            t: t_eval[j],
            reason: "no state recorded for requested time".into(),
        });
    }

    let nt = t_eval.len();
    let mut states = Vec::with_capacity(nt * dy);
    let mut sens = with_sens.then(|| Vec::with_capacity(nt * dy * dp));
    for j in 0..nt {
        let row = &out[j * n..(j + 1) * n];
        states.extend_from_slice(&row[..dy]);
        if let Some(z) = sens.as_mut() {
            z.extend_from_slice(&row[dy..]);
        }
    }
    Ok(Trajectory {
        times: t_eval.to_vec(),
        state_dim: dy,
        param_dim: dp,
        states,
        sensitivities: sens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LotkaVolterra;
    use crate::ode::FnModel;
    use crate::signal::{sample_markov, MarkovChainSpec};

    const P: [f64; 4] = LotkaVolterra::TRUE_PARAMS;

    fn rk4_lv(y: [f64; 2], p: &[f64], s: f64, t_end: f64, h: f64) -> [f64; 2] {
        let m = LotkaVolterra::default();
        let f = |y: [f64; 2]| {
            let mut d = [0.0; 2];
            m.rhs(0.0, &y, p, s, &mut d);
            d
        };
        let n = (t_end / h).round() as usize;
        let mut y = y;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn fixed_point_stays_put() {
        let m = LotkaVolterra { y0: [0.5, 2.0] };
        let sig = Signal::constant(1.0, 20.0).unwrap();
        let ts: Vec<f64> = (0..=40).map(|k| k as f64 * 0.5).collect();
        let tr = integrate(&m, &P, InputSource::Sampled(&sig), &ts, &Default::default()).unwrap();
        for j in 0..tr.len() {
            let y = tr.state(j);
            assert!((y[0] - 0.5).hypot(y[1] - 2.0) < 1e-8);
        }
    }

    #[test]
    fn matches_fine_step_rk4() {
        let m = LotkaVolterra::default();
        let sig = Signal::constant(1.0, 20.0).unwrap();
        let tr = integrate(&m, &P, InputSource::Sampled(&sig), &[1.0], &Default::default()).unwrap();
        let oracle = rk4_lv([1.0, 1.0], &P, 1.0, 1.0, 1e-5);
        for i in 0..2 {
            assert!((tr.state(0)[i] - oracle[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn restart_equals_chained_pieces() {
        let m = LotkaVolterra::default();
        let sig = Signal::new(vec![0.0, 1.3], vec![1.0, 0.0], 3.0).unwrap();
        let opts = IntegratorOptions::default();
        let whole = integrate(&m, &P, InputSource::Sampled(&sig), &[3.0], &opts).unwrap();

        let first = Signal::constant(1.0, 1.3).unwrap();
        let mid = integrate(&m, &P, InputSource::Sampled(&first), &[1.3], &opts).unwrap();
        let m2 = LotkaVolterra {
            y0: [mid.state(0)[0], mid.state(0)[1]],
        };
        let second = Signal::constant(0.0, 1.7).unwrap();
        let end = integrate(&m2, &P, InputSource::Sampled(&second), &[1.7], &opts).unwrap();
        for i in 0..2 {
            assert!((whole.state(0)[i] - end.state(0)[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn sensitivities_start_at_zero() {
        let m = LotkaVolterra::default();
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 5).unwrap();
        let tr = integrate_with_sensitivities(
            &m,
            &P,
            InputSource::Sampled(&sig),
            &[0.0, 1.0],
            &Default::default(),
        )
        .unwrap();
        assert!(tr.sensitivity(0).unwrap().iter().all(|&z| z == 0.0));
        assert_eq!(tr.state(0), &[1.0, 1.0]);
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let m = LotkaVolterra::default();
        let sig = Signal::sampled_from_fn(|t| (t.cos() + 1.0) / 2.0, 0.01, 20.0).unwrap();
        let input = InputSource::Sampled(&sig);
        let opts = IntegratorOptions {
            rtol: 1e-11,
            atol: 1e-13,
            ..Default::default()
        };
        let tr = integrate_with_sensitivities(&m, &P, input, &[2.0], &opts).unwrap();
        let z = tr.sensitivity(0).unwrap();
        for j in 0..4 {
            let h = 1e-6 * P[j];
            let mut pp = P;
            pp[j] += h;
            let up = integrate(&m, &pp, input, &[2.0], &opts).unwrap();
            pp[j] = P[j] - h;
            let dn = integrate(&m, &pp, input, &[2.0], &opts).unwrap();
            for i in 0..2 {
                let fd = (up.state(0)[i] - dn.state(0)[i]) / (2.0 * h);
                let rel = (z[i * 4 + j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-4, "z[{i}][{j}] = {} vs {fd}", z[i * 4 + j]);
            }
        }
    }

    #[test]
    fn absent_parameter_has_zero_sensitivity() {
        let lv = LotkaVolterra::default();
        let lv2 = lv.clone();
        let lv3 = lv.clone();
        let model = FnModel {
            name: "lv5".into(),
            state_dim: 2,
            param_dim: 5,
            y0: vec![1.0, 1.0],
            param_names: (1..=5).map(|i| format!("p{i}")).collect(),
            positivity: vec![true; 5],
            nominal: vec![2.0, 0.5, 1.0, 1.0, 3.0],
            input_range: (0.0, 1.0),
            rhs: Box::new(move |t, y, p, s, dy| lv.rhs(t, y, &p[..4], s, dy)),
            jac_y: Box::new(move |t, y, p, s, out| lv2.jac_y(t, y, &p[..4], s, out)),
            jac_p: Box::new(move |t, y, p, s, out| {
                let mut j4 = [0.0; 8];
                lv3.jac_p(t, y, &p[..4], s, &mut j4);
                for i in 0..2 {
                    out[i * 5..i * 5 + 4].copy_from_slice(&j4[i * 4..i * 4 + 4]);
                    out[i * 5 + 4] = 0.0;
                }
            }),
        };
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 9).unwrap();
        let ts: Vec<f64> = (1..=20).map(f64::from).collect();
        let tr = integrate_with_sensitivities(
            &model,
            &[2.0, 0.5, 1.0, 1.0, 3.0],
            InputSource::Sampled(&sig),
            &ts,
            &Default::default(),
        )
        .unwrap();
        for j in 0..ts.len() {
            let z = tr.sensitivity(j).unwrap();
            assert_eq!((z[4], z[9]), (0.0, 0.0));
        }
    }

    #[test]
    fn tighter_tolerance_converges() {
        let m = LotkaVolterra::default();
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 3).unwrap();
        let ts: Vec<f64> = (1..=10).map(|k| 2.0 * k as f64).collect();
        let coarse = IntegratorOptions {
            rtol: 1e-6,
            atol: 1e-8,
            ..Default::default()
        };
        let fine = IntegratorOptions {
            rtol: 5e-7,
            atol: 5e-9,
            ..Default::default()
        };
        let a = integrate(&m, &P, InputSource::Sampled(&sig), &ts, &coarse).unwrap();
        let b = integrate(&m, &P, InputSource::Sampled(&sig), &ts, &fine).unwrap();
        for j in 0..ts.len() {
            for i in 0..2 {
                let d = (a.state(j)[i] - b.state(j)[i]).abs();
                assert!(d < 10.0 * (1e-6 * a.state(j)[i].abs() + 1e-8), "{d:e}");
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let m = LotkaVolterra::default();
        let sig = Signal::constant(1.0, 5.0).unwrap();
        let input = InputSource::Sampled(&sig);
        let o = IntegratorOptions::default();
        assert!(matches!(integrate(&m, &P, input, &[6.0], &o), Err(Error::Domain { .. })));
        assert!(matches!(integrate(&m, &P[..3], input, &[1.0], &o), Err(Error::Dimension(_))));
        assert!(integrate(&m, &P, input, &[2.0, 1.0], &o).is_err());
        assert!(integrate(&m, &[f64::NAN, 0.5, 1.0, 1.0], input, &[1.0], &o).is_err());
    }

    #[test]
    fn blow_up_carries_failure_time() {
        let m = LotkaVolterra::default();
        let sig = Signal::constant(1.0, 20.0).unwrap();
        let p = [2.0, 0.5, -50.0, 1.0];
        match integrate(&m, &p, InputSource::Sampled(&sig), &[20.0], &Default::default()) {
            Err(Error::Integration { t, .. }) => assert!(t > 0.0 && t < 20.0),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_has_sensitivity_columns() {
        let m = LotkaVolterra::default();
        let sig = Signal::constant(1.0, 2.0).unwrap();
        let tr = integrate_with_sensitivities(
            &m,
            &P,
            InputSource::Sampled(&sig),
            &[0.0, 1.0, 2.0],
            &Default::default(),
        )
        .unwrap();
        let path = std::env::temp_dir().join(format!("traj-{}.csv", std::process::id()));
        tr.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("t,y1,y2,z_1_1,z_1_2"));
        assert!(header.ends_with("z_2_4"));
        assert_eq!(text.lines().count(), 4);
    }
}
