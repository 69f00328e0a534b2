//! Dormand–Prince 5(4) explicit Runge–Kutta pair with step-size control
//! and the standard fourth-order continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and limits for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Accepted plus rejected steps allowed per call before giving up.
    pub max_steps: usize,
    #[serde(skip_serializing_if = "is_unbounded")]
    pub h_max: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 200_000,
            h_max: f64::INFINITY,
        }
    }
}

fn is_unbounded(h: &f64) -> bool {
    h.is_infinite()
}

/// Reusable work buffers for one system dimension.
pub(crate) struct Dopri5 {
    n: usize,
    /// Leading components that enter the error norm.
    m: usize,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    dense: [Vec<f64>; 5],
    pub steps: usize,
}

impl Dopri5 {
    #[cfg(test)]
    pub fn new(n: usize) -> Self {
        Self::with_error_dim(n, n)
    }

    /// Only the first `m` components steer the step size. Appended
    /// components (such as sensitivities) then follow exactly the steps the
    /// leading system would take alone.
    pub fn with_error_dim(n: usize, m: usize) -> Self {
        assert!(m >= 1 && m <= n);
        let v = || vec![0.0; n];
        Self {
            n,
            m,
            k: [v(), v(), v(), v(), v(), v(), v()],
            ytmp: v(),
            ynew: v(),
            dense: [v(), v(), v(), v(), v()],
            steps: 0,
        }
    }

    /// Hairer's starting step heuristic.
    fn initial_step<F>(&mut self, f: &mut F, t0: f64, y0: &[f64], span: f64, o: &IntegratorOptions) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let (n, m) = (self.n, self.m);
        f(t0, y0, &mut self.k[0]);
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..m {
            let sk = o.atol + o.rtol * y0[i].abs();
            d0 += (y0[i] / sk).powi(2);
            d1 += (self.k[0][i] / sk).powi(2);
        }
        d0 = (d0 / m as f64).sqrt();
        d1 = (d1 / m as f64).sqrt();
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span).min(o.h_max);
        for i in 0..n {
            self.ytmp[i] = y0[i] + h0 * self.k[0][i];
        }
        f(t0 + h0, &self.ytmp, &mut self.k[1]);
        let mut d2 = 0.0;
        for i in 0..m {
            let sk = o.atol + o.rtol * y0[i].abs();
            d2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        d2 = (d2 / m as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(o.h_max)
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1`, overwriting `y` with the
    /// state at `t1`. For every `t_out[j]` in `(t0, t1]` the interpolated
    /// state is passed to `record(j, state)`. Returns the last accepted step
    /// size as a hint for a subsequent call.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate<F, R>(
        &mut self,
        f: &mut F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        t_out: &[f64],
        mut record: R,
        h_hint: Option<f64>,
        o: &IntegratorOptions,
    ) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        R: FnMut(usize, &[f64]),
    {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(y.len(), n);
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(h_hint.unwrap_or(0.0));
        }
        let mut h = match h_hint {
            Some(h) if h > 0.0 => h.min(span).min(o.h_max),
            _ => self.initial_step(f, t0, y, span, o),
        };
        let mut t = t0;
        let mut next_out = t_out.partition_point(|&x| x <= t0);
        let mut last_h = h;
        let mut fsal_valid = false;
        let mut reject_streak = false;

        while t < t1 {
            if self.steps >= o.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps", o.max_steps),
                });
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            let mut last = false;
            let h_plan = h;
            if t + 1.01 * h >= t1 {
                h = t1 - t;
                last = true;
            }
            self.steps += 1;

            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            if !fsal_valid {
                f(t, y, k1);
            }
            let ytmp = &mut self.ytmp;
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, ytmp, k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, ytmp, k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, ytmp, k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, ytmp, k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t1 } else { t + h };
            f(t_new, ytmp, k6);
            let ynew = &mut self.ynew;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t_new, ynew, k7);

            let mut err = 0.0;
            for i in 0..m {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = o.atol + o.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sk) * (e / sk);
            }
            let finite = ynew.iter().all(|v| v.is_finite());
            err = (err / m as f64).sqrt();
            if !finite || !err.is_finite() {
                // Treat as a failed step; shrink hard.
                h *= 0.1;
                fsal_valid = true;
                reject_streak = true;
                continue;
            }

            if err <= 1.0 {
                // Dense output coefficients for this step.
                if next_out < t_out.len() && t_out[next_out] <= t_new {
                    let [r1, r2, r3, r4, r5] = &mut self.dense;
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        r1[i] = y[i];
                        r2[i] = ydiff;
                        r3[i] = bspl;
                        r4[i] = ydiff - h * k7[i] - bspl;
                        r5[i] = h
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                                + D7 * k7[i]);
                    }
                    while next_out < t_out.len() && t_out[next_out] <= t_new {
                        let tq = t_out[next_out];
                        if tq == t_new {
                            record(next_out, ynew);
                        } else {
                            let th = (tq - t) / h;
                            let th1 = 1.0 - th;
                            for i in 0..n {
                                self.ytmp[i] = r1[i]
                                    + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
                            }
                            record(next_out, &self.ytmp);
                        }
                        next_out += 1;
                    }
                }
                y.copy_from_slice(ynew);
                std::mem::swap(k1, k7);
                fsal_valid = true;
                t = t_new;
                last_h = if last { h_plan.max(h) } else { h };
                let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
                fac = fac.clamp(0.2, if reject_streak { 1.0 } else { 5.0 });
                reject_streak = false;
                h = (h * fac).min(o.h_max);
                if last {
                    break;
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).max(0.2);
                h *= fac;
                fsal_valid = true;
                reject_streak = true;
            }
        }
        Ok(last_h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut s = Dopri5::new(1);
        let mut y = [1.0];
        let outs = [0.5, 1.0, 1.7, 3.0];
        let mut rec = vec![0.0; 4];
        s.integrate(
            &mut |_t, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0],
            0.0,
            3.0,
            &mut y,
            &outs,
            |j, v| rec[j] = v[0],
            None,
            &IntegratorOptions::default(),
        )
        .unwrap();
        for (t, v) in outs.iter().zip(&rec) {
            assert!((v - (-2.0 * t).exp()).abs() < 1e-9, "t={t}: {v}");
        }
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_on_harmonic_oscillator() {
        let mut s = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let outs: Vec<f64> = (1..=100).map(|k| k as f64 * 0.1).collect();
        let mut rec = vec![[0.0; 2]; 100];
        s.integrate(
            &mut |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            10.0,
            &mut y,
            &outs,
            |j, v| rec[j] = [v[0], v[1]],
            None,
            &IntegratorOptions::default(),
        )
        .unwrap();
        for (t, v) in outs.iter().zip(&rec) {
            assert!((v[0] - t.cos()).abs() < 1e-7);
            assert!((v[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn blow_up_reports_failure() {
        let mut s = Dopri5::new(1);
        let mut y = [1.0];
        let res = s.integrate(
            &mut |_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            0.0,
            2.0,
            &mut y,
            &[],
            |_, _| {},
            None,
            &IntegratorOptions::default(),
        );
        match res {
            Err(Error::Integration { t, .. }) => assert!(t < 1.0 + 1e-6 && t > 0.9),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
