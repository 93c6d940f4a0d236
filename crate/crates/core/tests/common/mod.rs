//! Instance generators shared by the integration and acceptance targets.
#![allow(dead_code)]

use adaptive_pooling::baselines::{nn_omp, sbl, SblConfig};
use adaptive_pooling::matrices::{construct_kirkman, verify_kirkman, KirkmanParams, SensingMatrix, BUILD_SEED};
use adaptive_pooling::model::NoiseModel;
use adaptive_pooling::recovery::{log_posterior_gradient, ReducedInstance};
use adaptive_pooling::rng::{derive_seed, label_word, stream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn seed_for(label: &str) -> u64 {
    derive_seed(BUILD_SEED, &[label_word(label)])
}

pub fn instance(rows: Vec<Vec<u8>>, z: Vec<f64>) -> ReducedInstance {
    let (m, s) = (rows.len(), rows[0].len());
    ReducedInstance {
        survivors: (0..s).collect(),
        active_rows: (0..m).collect(),
        sub_matrix: rows,
        sub_measurements: z,
        pool_width: s,
    }
}

pub fn random_rows(rng: &mut impl Rng, m: usize, s: usize) -> Vec<Vec<u8>> {
    (0..m).map(|_| (0..s).map(|_| rng.random_range(0..2u8)).collect()).collect()
}

pub fn to_dense(rows: &[Vec<u8>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j] as f64)
}

/// Number of the 50 random 10x20 instances whose SBL evidence trace never
/// drops by more than 1e-9 (relative).
pub fn sbl_monotone_count() -> usize {
    let mut rng = stream(seed_for("sbl_evidence"));
    let mut ok = 0;
    for _ in 0..50 {
        let rows = random_rows(&mut rng, 10, 20);
        let a = to_dense(&rows);
        let mut x = DVector::zeros(20);
        for _ in 0..3 {
            x[rng.random_range(0..20)] = rng.random_range(1.0..1000.0);
        }
        let z: Vec<f64> = (&a * x).iter().map(|v| v * rng.random_range(0.9..1.1)).collect();
        let out = sbl(&instance(rows, z), &SblConfig::default()).unwrap();
        if out
            .log_evidence
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
        {
            ok += 1;
        }
    }
    ok
}

/// Smallest residual over all non-negative fits with at most two columns.
pub fn brute_force_support(a: &DMatrix<f64>, z: &DVector<f64>) -> Vec<usize> {
    let s = a.ncols();
    let mut best = (z.norm(), Vec::new());
    for i in 0..s {
        for j in i..s {
            let cols: Vec<usize> = if i == j { vec![i] } else { vec![i, j] };
            let sub = a.select_columns(&cols);
            let coef = sub.clone().svd(true, true).solve(z, 1e-12).unwrap();
            if coef.iter().any(|&c| c < 0.0) {
                continue;
            }
            let r = (z - sub * coef).norm();
            if r < best.0 - 1e-9 {
                best = (r, cols);
            }
        }
    }
    best.1
}

/// Every four columns independent, so 2-sparse signals are identifiable.
pub fn general_position(a: &DMatrix<f64>) -> bool {
    let s = a.ncols();
    for i in 0..s {
        for j in i + 1..s {
            for k in j + 1..s {
                for l in k + 1..s {
                    if a.select_columns(&[i, j, k, l]).rank(1e-9) < 4 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub struct OmpTrial {
    pub truth: Vec<usize>,
    pub oracle: Vec<usize>,
    pub support: Vec<usize>,
    pub iterations: usize,
    pub final_residual: f64,
}

/// 100 noiseless 2-sparse 8x12 instances in general position, each solved
/// by NN-OMP and by the brute-force oracle.
pub fn omp_trials() -> Vec<OmpTrial> {
    let mut rng = stream(seed_for("nn_omp"));
    (0..100)
        .map(|_| {
            let (rows, a) = loop {
                let rows = random_rows(&mut rng, 8, 12);
                let a = to_dense(&rows);
                if general_position(&a) {
                    break (rows, a);
                }
            };
            let i = rng.random_range(0..12);
            let j = (i + rng.random_range(1..12)) % 12;
            let mut x = DVector::zeros(12);
            x[i] = rng.random_range(1.0..10.0);
            x[j] = rng.random_range(1.0..10.0);
            let z = &a * &x;
            let oracle = brute_force_support(&a, &z);
            let out = nn_omp(&instance(rows, z.iter().copied().collect()), 1e-9).unwrap();
            OmpTrial {
                truth: vec![i.min(j), i.max(j)],
                oracle,
                support: out.support,
                iterations: out.iterations,
                final_residual: *out.residual_norms.last().unwrap(),
            }
        })
        .collect()
}

/// Instances where NN-OMP, the oracle and the truth all agree.
pub fn omp_exact_count() -> usize {
    omp_trials()
        .iter()
        .filter(|t| t.support == t.oracle && t.oracle == t.truth)
        .count()
}

/// `sum_i ln p(z_i | (A x)_i)` over the active rows, loads on every survivor.
pub fn log_lik(r: &ReducedInstance, x: &[f64], noise: &NoiseModel) -> f64 {
    r.sub_matrix
        .iter()
        .zip(&r.sub_measurements)
        .map(|(row, &z)| {
            let y: f64 = row.iter().zip(x).filter(|(&a, _)| a == 1).map(|(_, v)| v).sum();
            noise.log_likelihood(z, y)
        })
        .sum()
}

/// Worst relative error, over 100 random instances, between the analytic
/// gradient and central differences. Error is measured norm-wise per
/// instance.
pub fn gradient_worst_error() -> f64 {
    let noise = NoiseModel::tapestry();
    let mut rng = stream(seed_for("gradient"));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(2..9);
        let s = rng.random_range(1..7);
        let rows: Vec<Vec<u8>> = (0..m)
            .map(|_| loop {
                let row: Vec<u8> = (0..s).map(|_| rng.random_range(0..2u8)).collect();
                if row.contains(&1) {
                    break row;
                }
            })
            .collect();
        let truth: Vec<f64> = (0..s).map(|_| rng.random_range(1.0..1000.0)).collect();
        let dense = to_dense(&rows);
        let z: Vec<f64> = (dense * DVector::from_vec(truth))
            .iter()
            .map(|y| y * noise.sample_factor(&mut rng))
            .collect();
        let r = instance(rows, z);
        let x: Vec<f64> = (0..s).map(|_| rng.random_range(1.0..1000.0)).collect();
        let subset: Vec<usize> = (0..s).collect();
        let g = log_posterior_gradient(&r, &subset, &x, &noise).unwrap();
        let fd: Vec<f64> = (0..s)
            .map(|k| {
                let h = 1e-6 * x[k];
                let (mut up, mut dn) = (x.clone(), x.clone());
                up[k] += h;
                dn[k] -= h;
                (log_lik(&r, &up, &noise) - log_lik(&r, &dn, &noise)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}

/// Whether the constructed system verifies, and how many of `flips` random
/// single-entry flips are caught by the verifier.
pub fn kirkman_flips(m: usize, c: usize, flips: usize) -> (bool, usize) {
    let params = KirkmanParams::new(m, c).unwrap();
    let label = format!("kirkman_{m}_{c}");
    let mut rng = stream(seed_for(&label));
    let mat = construct_kirkman(params, &mut rng).unwrap();
    let ok = verify_kirkman(&mat, params).unwrap().ok;
    let rows = mat.to_rows();
    let mut caught = 0;
    for _ in 0..flips {
        let (i, j) = (rng.random_range(0..mat.rows()), rng.random_range(0..mat.cols()));
        let mut flipped = rows.clone();
        flipped[i][j] ^= 1;
        let broken = SensingMatrix::from_rows(flipped)
            .and_then(|f| verify_kirkman(&f, params))
            .map_or(true, |rep| !rep.ok);
        caught += broken as usize;
    }
    (ok, caught)
}
