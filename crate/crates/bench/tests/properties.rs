use hades_bench::config::{ExperimentConfig, OptimizerId};
use hades_bench::data::{draw_initial_guess, observation_times};
use hades_bench::seeds::SeedStreams;
use hades_bench::study::{quantile, run_study};
use proptest::prelude::*;

proptest! {
    #[test]
    fn trial_seeds_never_collide(master in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assume!(i != j);
        let s = SeedStreams::new(master);
        prop_assert_ne!(s.indexed(SeedStreams::TRIALS, i), s.indexed(SeedStreams::TRIALS, j));
    }

    #[test]
    fn initial_guesses_stay_in_the_box(seed in any::<u64>(), lo in 0.05f64..1.0, span in 1.0f64..20.0) {
        let p = [2.0, 0.5, 1.0, 1.0];
        let hi = lo * span;
        let p0 = draw_initial_guess(&p, [lo, hi], seed);
        for (a, b) in p0.iter().zip(&p) {
            prop_assert!(*a >= lo * b * (1.0 - 1e-12) && *a <= hi * b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quantiles_are_ordered_and_bounded(v in prop::collection::vec(-1e6f64..1e6, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        let (a, b) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (qa, qb) = (quantile(&v, a), quantile(&v, b));
        prop_assert!(qa <= qb);
        prop_assert!(qa >= min && qb <= max);
    }

    #[test]
    fn observation_times_are_uniform(h in 0.5f64..100.0, n in 1usize..200) {
        let t = observation_times(h, n);
        prop_assert_eq!(t.len(), n);
        prop_assert!(t[0] > 0.0);
        prop_assert!((t[n - 1] - h).abs() <= 1e-12 * h);
        for w in t.windows(2) {
            prop_assert!((w[1] - w[0] - h / n as f64).abs() <= 1e-9 * h);
        }
    }
}

#[test]
fn seeded_studies_repeat_exactly() {
    let mut cfg = ExperimentConfig::from_json(r#"{ "model": "lv", "signal": { "kind": "markov", "horizon": 20 } }"#).unwrap();
    cfg.optimizer = OptimizerId::Nm;
    cfg.n_obs = 20;
    cfg.trials = 6;
    cfg.seed = 11;
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.p0, y.p0);
        assert_eq!(x.fit.p_hat, y.fit.p_hat);
        assert_eq!(x.fit.loss_trace, y.fit.loss_trace);
    }
    assert_eq!(a.summary, b.summary);
}
