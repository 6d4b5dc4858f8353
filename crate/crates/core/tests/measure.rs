use portfolio_core::scheduler::{measure_mean_time, MeasureConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noisy_timer_converges_near_true_mean() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = 2.5;
        // Uniform noise with a 1% standard deviation.
        let spread = 0.01 * truth * 3f64.sqrt();
        let m = measure_mean_time(
            || Ok::<f64, String>(truth + rng.gen_range(-spread..spread)),
            &MeasureConfig::default(),
        )
        .unwrap();
        assert!(m.converged, "seed {seed}");
        assert!((m.mean - truth).abs() <= 0.035 * truth);
        assert!(m.half_width <= 0.035 * m.mean);
    }
}

#[test]
fn wide_spread_hits_the_run_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = MeasureConfig {
        max_runs: 10,
        ..Default::default()
    };
    let m = measure_mean_time(|| Ok::<f64, String>(rng.gen_range(0.1..10.0)), &cfg).unwrap();
    assert_eq!(m.runs, 10);
    assert!(!m.converged);
}
