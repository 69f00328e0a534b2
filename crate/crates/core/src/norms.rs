//! Vector and function norms used throughout the crate.
//!
//! Three flavours appear: the Euclidean norm of a parameter vector, the
//! root-mean norm of residuals over a discrete set of observation times, and
//! the L2 norm of a vector-valued function over a continuous interval.

/// Euclidean norm of a vector.
pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Norm over `n_times` observation times: `sqrt( (1/N) Σ_j Σ_i v_ij² )`.
///
/// `values` holds every component at every time, flattened in any order.
pub fn discrete_l2(values: &[f64], n_times: usize) -> f64 {
    if n_times == 0 {
        return 0.0;
    }
    (values.iter().map(|x| x * x).sum::<f64>() / n_times as f64).sqrt()
}

/// Number of grid points used for continuous L2 norms.
pub const QUADRATURE_POINTS: usize = 2001;

/// Composite Simpson quadrature of uniformly spaced samples on `[a, b]`.
///
/// `samples.len()` must be odd and at least 3.
pub fn simpson(samples: &[f64], a: f64, b: f64) -> f64 {
    let n = samples.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson's rule needs an odd number (>= 3) of samples");
    let h = (b - a) / (n - 1) as f64;
    let mut acc = samples[0] + samples[n - 1];
    for (k, s) in samples.iter().enumerate().take(n - 1).skip(1) {
        acc += if k % 2 == 1 { 4.0 * s } else { 2.0 * s };
    }
    acc * h / 3.0
}

/// Uniform grid of `n` points spanning `[a, b]` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { b } else { a + h * k as f64 })
        .collect()
}

/// `||f||_{L2([a,b])}` for a vector-valued function sampled on the uniform
/// grid `uniform_grid(a, b, samples.len())`, where `samples[k]` is `f(t_k)`.
pub fn continuous_l2<V: AsRef<[f64]>>(samples: &[V], a: f64, b: f64) -> f64 {
    let sq: Vec<f64> = samples
        .iter()
        .map(|v| v.as_ref().iter().map(|x| x * x).sum())
        .collect();
    simpson(&sq, a, b).max(0.0).sqrt()
}
