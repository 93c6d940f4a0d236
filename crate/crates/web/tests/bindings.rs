use adaptive_pooling::harness::{run_experiment, ExperimentConfig};
use adaptive_pooling::schemes::{Scheme, SchemeConfig};
use adaptive_pooling_web::{decode_json, pool_count_json, simulate_trial_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn pool_count_posterior_is_normalised() {
    let v = parse(pool_count_json(95.0, 31, 0.01).unwrap());
    let post: Vec<f64> = v["posterior"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert_eq!(post.len(), 31);
    assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let argmax = post.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    assert_eq!(v["k_hat"].as_u64().unwrap() as usize, argmax);
    assert!(pool_count_json(-1.0, 31, 0.01).is_err());
}

#[test]
fn trial_matches_the_harness() {
    for scheme in [Scheme::Dorfman, Scheme::Stamp] {
        let cfg = ExperimentConfig {
            k_values: vec![4],
            trials: 1,
            master_seed: 7,
            scheme_configs: vec![SchemeConfig::new(scheme)],
            alpha_values: vec![0.5],
            ..ExperimentConfig::default()
        };
        let run = &run_experiment(&cfg, Some(1)).unwrap().trials[0];
        let v = parse(simulate_trial_json(scheme.label(), 4, 7, 0.5).unwrap());
        assert_eq!(v["seed"].as_u64().unwrap(), run.seed);
        assert_eq!(v["measurements"].as_u64().unwrap() as usize, run.measurements_total);
        let truth: Vec<usize> = serde_json::from_value(v["truth"].clone()).unwrap();
        let estimate: Vec<usize> = serde_json::from_value(v["estimate"].clone()).unwrap();
        assert_eq!(truth, run.truth);
        assert_eq!(estimate, run.estimates[0].support);
    }
    assert!(simulate_trial_json("pooling", 4, 7, 0.5).is_err());
}

#[test]
fn decode_tolerates_pasted_text() {
    // Column 1 alone lights rows 0 and 2.
    let matrix = "4 4\r\n1 1 1 1 \r\n1 1 0 0\r\n0 0 1 1\r\n0 1 0 1";
    let v = parse(decode_json(matrix, "40.0, 40.5\n0 39.8", 0.9, 0, 0.05).unwrap());
    assert_eq!(v["k_hat"], 1);
    assert_eq!(v["survivors"], serde_json::json!([0, 1]));
    assert_eq!(v["estimate"], serde_json::json!([1]));
    assert!(decode_json(matrix, "1 2 x 4", 0.9, 0, 0.05).is_err());
}
