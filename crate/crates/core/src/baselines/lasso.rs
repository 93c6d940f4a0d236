use nalgebra::DVector;

use super::design;
use crate::error::{Error, Result};
use crate::recovery::ReducedInstance;

const STATIONARITY_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 500_000;

/// Euclidean projection onto `{x >= 0, sum x <= lambda}`.
fn project(v: &mut [f64], lambda: f64) {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    if v.iter().sum::<f64>() <= lambda {
        return;
    }
    // Onto the scaled simplex: shift by theta and clip.
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - lambda) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Non-negative LASSO in its constrained form:
/// `argmin ||z - A x||_2` over `x >= 0`, `||x||_1 <= lambda`,
/// by accelerated projected gradient with adaptive restart.
pub fn nn_lasso(reduced: &ReducedInstance, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let s = reduced.s_star();
    if s == 0 || lambda == 0.0 || reduced.m_star() == 0 {
        return Ok(vec![0.0; s]);
    }
    let (a, z) = design(reduced);
    let ata = a.transpose() * &a;
    let atz = a.transpose() * &z;
    let lip = ata.clone().symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
    let objective = |x: &DVector<f64>| 0.5 * (&z - &a * x).norm_squared();

    let mut x = DVector::zeros(s);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    for _ in 0..MAX_ITERS {
        let grad = &ata * &y - &atz;
        let mut next = &y - grad / lip;
        project(next.as_mut_slice(), lambda);
        let f_next = objective(&next);
        if f_next > f_prev {
            // Momentum overshot: restart from the last iterate.
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        f_prev = f_next;

        let mut probe = &x - (&ata * &x - &atz) / lip;
        project(probe.as_mut_slice(), lambda);
        if (&probe - &x).amax() <= STATIONARITY_TOL * x.amax().max(1.0) {
            break;
        }
    }
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::SensingMatrix;
    use crate::recovery::{comp, PoolInstance};
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, Exp1};

    fn reduced(mat: SensingMatrix, z: Vec<f64>) -> ReducedInstance {
        comp(&PoolInstance::new(mat, z).unwrap())
    }

    #[test]
    fn projection_properties() {
        let mut v = vec![3.0, -1.0, 1.0];
        project(&mut v, 2.0);
        assert!((v.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
        let mut w = vec![0.5, -1.0, 0.25];
        project(&mut w, 2.0);
        assert_eq!(w, vec![0.5, 0.0, 0.25]);
    }

    #[test]
    fn trivial_cases() {
        let r = reduced(SensingMatrix::identity(3), vec![1.0, 2.0, 3.0]);
        assert_eq!(nn_lasso(&r, 0.0).unwrap(), vec![0.0; 3]);
        let x = nn_lasso(&r, 10.0).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn beats_random_feasible_points() {
        let mut rng = stream(41);
        let rows: Vec<Vec<u8>> = (0..6)
            .map(|_| (0..10).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let mat = SensingMatrix::from_rows(rows).unwrap();
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..4.0)).collect();
        let r = reduced(mat, z);
        let lambda = 5.0;
        let x = nn_lasso(&r, lambda).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!(x.iter().sum::<f64>() <= lambda * (1.0 + 1e-10));
        let (a, zv) = design(&r);
        let obj = |x: &[f64]| (&zv - &a * DVector::from_column_slice(x)).norm();
        let best = obj(&x);
        let n = r.s_star();
        for _ in 0..100_000 {
            // Uniform over {x >= 0, sum x <= lambda} via n + 1 exponentials.
            let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = e.iter().sum();
            let p: Vec<f64> = e[..n].iter().map(|v| lambda * v / total).collect();
            assert!(best <= obj(&p) + 1e-9);
        }
    }
}
