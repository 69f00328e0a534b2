use hades_core::models::Circadian;
use hades_core::ode::{integrate, InputSource, IntegratorOptions};
use hades_core::signal::{synthetic_light_schedule, LightSchedule};

/// Largest `|x(t) - x(t - 24)|` over days 5 to 10, relative to the peak to
/// peak amplitude of `x` over the same window.
fn day_to_day_deviation(tau_c: f64) -> f64 {
    let m = Circadian::default();
    let sig = synthetic_light_schedule(&LightSchedule::new(10, 1000.0, 0.0, vec![(7.0, 23.0)])).unwrap();
    let mut p = Circadian::TRUE_PARAMS;
    p[0] = tau_c;
    let grid: Vec<f64> = (0..=2400).map(|k| k as f64 * 0.1).collect();
    let tr = integrate(&m, &p, InputSource::Sampled(&sig), &grid, &IntegratorOptions::default()).unwrap();
    let x: Vec<f64> = (0..grid.len()).map(|j| tr.state(j)[0]).collect();
    let window = &x[1200..];
    let amp = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - window.iter().cloned().fold(f64::INFINITY, f64::min);
    let dev = (1440..x.len()).map(|j| (x[j] - x[j - 240]).abs()).fold(0.0, f64::max);
    dev / amp
}

#[test]
fn near_day_oscillator_entrains_to_a_daily_schedule() {
    let d = day_to_day_deviation(24.2);
    assert!(d < 0.02, "relative day-to-day deviation {d}");
}

// The estimation benchmark uses tau_c = 20, which 1000 lux cannot pull onto
// a 24 h day.
#[test]
fn twenty_hour_oscillator_does_not_entrain() {
    let d = day_to_day_deviation(20.0);
    assert!(d > 0.02, "relative day-to-day deviation {d}");
}
