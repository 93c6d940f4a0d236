use adaptive_pooling::model::{
    apply_noise, cycle_to_measurement, generate_signal, generate_signal_fixed_k, measurement_to_cycle, LoadLaw,
    NoiseModel, QpcrParams, SignalDistribution,
};
use adaptive_pooling::rng::stream;
use proptest::prelude::*;

fn qpcr() -> QpcrParams {
    QpcrParams::new(1.95, 1e10, 40, 0.1).unwrap()
}

proptest! {
    #[test]
    fn noise_preserves_zero_only(seed in any::<u64>(), y in prop_oneof![Just(0.0), 0.0..1e6f64]) {
        let z = apply_noise(y, &NoiseModel::tapestry(), &mut stream(seed));
        prop_assert_eq!(z == 0.0, y == 0.0);
        prop_assert!(z >= 0.0 && z.is_finite());
    }

    #[test]
    fn cycle_round_trip(c in 1e-3..40.0f64) {
        let p = qpcr();
        let back = measurement_to_cycle(cycle_to_measurement(c, &p).unwrap(), &p).unwrap();
        prop_assert!((back - c).abs() <= 1e-12 * c.max(1.0), "{c} -> {back}");
    }

    #[test]
    fn signals_are_reproducible(seed in any::<u64>(), k in 0usize..40) {
        let law = LoadLaw::default();
        let a = generate_signal_fixed_k(961, k, &law, &mut stream(seed)).unwrap();
        let b = generate_signal_fixed_k(961, k, &law, &mut stream(seed)).unwrap();
        prop_assert_eq!(a.support().len(), k);
        prop_assert!(a.values().iter().all(|&v| v == 0.0 || (1.0..=1000.0).contains(&v)));
        prop_assert_eq!(&a, &b);

        let dist = SignalDistribution::new(961, 0.01, law).unwrap();
        let mut r1 = stream(seed);
        let mut r2 = stream(seed);
        let x = generate_signal(&dist, &mut r1);
        let noisy1: Vec<f64> = x.values().iter().map(|&y| apply_noise(y, &NoiseModel::tapestry(), &mut r1)).collect();
        let y = generate_signal(&dist, &mut r2);
        let noisy2: Vec<f64> = y.values().iter().map(|&y| apply_noise(y, &NoiseModel::tapestry(), &mut r2)).collect();
        prop_assert_eq!(x, y);
        prop_assert_eq!(noisy1, noisy2);
    }
}

#[test]
fn log_noise_moments_within_three_sigma() {
    let noise = NoiseModel::tapestry();
    let mut rng = stream(11);
    let n = 200_000;
    let logs: Vec<f64> = (0..n).map(|_| (apply_noise(250.0, &noise, &mut rng) / 250.0).ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = noise.sigma_eps;
    assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    // Sample variance of a normal has standard error sigma^2 sqrt(2 / (n - 1)).
    assert!((var - sigma * sigma).abs() <= 3.0 * sigma * sigma * (2.0 / (n - 1) as f64).sqrt(), "var {var}");
}

#[test]
fn non_detection_reads_zero() {
    let p = qpcr();
    assert_eq!(cycle_to_measurement(40.5, &p).unwrap(), 0.0);
    assert!(measurement_to_cycle(0.0, &p).is_err());
}
