use adaptive_pooling::matrices::{
    construct_kirkman, design_profile, profile_sample, verify_kirkman, verify_profile, KirkmanParams, SensingMatrix,
    DEFAULT_MAX_ATTEMPTS, DESIGN_SIZES,
};
use adaptive_pooling::rng::stream;
use proptest::prelude::*;

mod common;
use common::*;

#[test]
fn sampled_designs_realise_their_profiles() {
    for &(r, w) in &DESIGN_SIZES {
        let profile = design_profile(r, w).unwrap();
        let mut rng = stream(seed_for(&format!("profile_{r}x{w}")));
        for i in 0..1000 {
            let mat = profile_sample(&profile, r, w, &mut rng, DEFAULT_MAX_ATTEMPTS).unwrap();
            assert_eq!(mat.row_weights().iter().sum::<usize>(), mat.col_weights().iter().sum::<usize>());
            let report = verify_profile(&mat, &profile);
            assert!(report.ok, "{r}x{w} sample {i}: {:?}", report.violation);
        }
    }
}

#[test]
fn kirkman_flips_all_caught() {
    assert_eq!(kirkman_flips(9, 4, 1000), (true, 1000));
    assert_eq!(kirkman_flips(15, 7, 1000), (true, 1000));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_single_flip_breaks_a_kirkman_system(seed in any::<u64>(), order in prop_oneof![Just((9usize, 4usize)), Just((15, 7)), Just((3, 1))], i in 0usize..1000, j in 0usize..1000) {
        let params = KirkmanParams::new(order.0, order.1).unwrap();
        let mat = construct_kirkman(params, &mut stream(seed)).unwrap();
        prop_assert!(verify_kirkman(&mat, params).unwrap().ok);
        let mut rows = mat.to_rows();
        rows[i % mat.rows()][j % mat.cols()] ^= 1;
        let broken = SensingMatrix::from_rows(rows).and_then(|f| verify_kirkman(&f, params)).map_or(true, |r| !r.ok);
        prop_assert!(broken);
    }

    #[test]
    fn handshake_holds_for_random_matrices(seed in any::<u64>(), m in 1usize..12, n in 1usize..40) {
        use rand::Rng;
        let mut rng = stream(seed);
        let rows: Vec<Vec<u8>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..2u8)).collect()).collect();
        let mat = SensingMatrix::from_rows(rows).unwrap();
        prop_assert_eq!(mat.row_weights().iter().sum::<usize>(), mat.total_ones());
        prop_assert_eq!(mat.col_weights().iter().sum::<usize>(), mat.total_ones());
    }
}
