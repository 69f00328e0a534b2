use super::SmootherNet;

/// Piecewise-cubic Hermite table of a smooth network, built from exact
/// values and time derivatives on a uniform grid. Evaluation is O(1) and the
/// result is C^1 in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTable {
    t_end: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl SmoothTable {
    pub(crate) fn from_net(net: &SmootherNet, t_end: f64, intervals: usize) -> Self {
        let intervals = intervals.max(1);
        let h = t_end / intervals as f64;
        let (values, slopes) = (0..=intervals)
            .map(|k| net.forward_with_derivative(k as f64 * h))
            .unzip();
        Self {
            t_end,
            h,
            values,
            slopes,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Value at `t`, clamped to the table's range.
    #[inline]
    pub fn evaluate(&self, t: f64) -> f64 {
        let x = (t / self.h).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (x as usize).min(self.values.len() - 2);
        let s = x - k as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[k]
            + h10 * self.h * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * self.h * self.slopes[k + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_markov, MarkovChainSpec};

    fn max_error(net: &SmootherNet, intervals: usize) -> f64 {
        let table = net.tabulate(20.0, intervals);
        (0..997)
            .map(|k| k as f64 * 0.02007)
            .map(|t| (table.evaluate(t) - net.forward(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn table_tracks_network_closely() {
        let sig = sample_markov(&MarkovChainSpec::two_state_default(), 20.0, 2).unwrap();
        let net = SmootherNet::init_for(&sig, 8).unwrap();
        let coarse = max_error(&net, 2000);
        let fine = max_error(&net, 4000);
        assert!(fine < 1e-7, "{fine:e}");
        // ELU makes the network only C^1, so the rate is second order.
        assert!(coarse / fine > 3.5, "{coarse:e} / {fine:e}");
        let table = net.tabulate(20.0, 4000);
        assert_eq!(table.evaluate(0.0), net.forward(0.0));
        assert!((table.evaluate(20.0) - net.forward(20.0)).abs() < 1e-14);
    }
}
