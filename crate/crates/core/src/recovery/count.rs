//! Prevalence and per-pool count estimation from stage-1 readings.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{LoadLaw, NoiseModel};

/// Above this many loads the exact Irwin-Hall density gives way to a
/// moment-matched normal.
const IRWIN_HALL_MAX_K: usize = 12;
const HERMITE_NODES: usize = 64;

/// Maximum-likelihood prevalence from `t` positive pools out of `q` pools of
/// size `s`: `1 - (1 - t/q)^(1/s)`.
pub fn estimate_prevalence(t: usize, q: usize, s: usize) -> f64 {
    assert!(t <= q && q > 0 && s > 0, "need 0 <= t <= q, q >= 1, s >= 1");
    let p = 1.0 - (1.0 - t as f64 / q as f64).powf(1.0 / s as f64);
    p.clamp(0.0, 1.0)
}

/// Density of the sum of `k` independent U(0, 1) variables at `x`.
pub fn irwin_hall_density(x: f64, k: usize) -> f64 {
    assert!(k >= 1, "Irwin-Hall order must be at least 1");
    let kf = k as f64;
    if !(x > 0.0 && x < kf) {
        // The closed interval matters only for k = 1, a set of measure zero.
        return if k == 1 && (x == 0.0 || x == 1.0) { 1.0 } else { 0.0 };
    }
    // Symmetric about k/2; summing from the nearer end limits cancellation.
    let x = x.min(kf - x);
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=(x.floor() as usize) {
        let term = binom * (x - j as f64).powi(k as i32 - 1);
        sum += if j % 2 == 0 { term } else { -term };
        binom = binom * (kf - j as f64) / (j as f64 + 1.0);
    }
    let fact: f64 = (1..k).map(|i| i as f64).product();
    (sum / fact).max(0.0)
}

/// Density of the sum of `k` loads at `y`.
fn load_sum_density(y: f64, k: usize, law: &LoadLaw) -> f64 {
    match *law {
        LoadLaw::Uniform { lo, hi } => {
            let width = hi - lo;
            if k <= IRWIN_HALL_MAX_K {
                irwin_hall_density((y - k as f64 * lo) / width, k) / width
            } else {
                let mean = k as f64 * 0.5 * (lo + hi);
                let var = k as f64 * width * width / 12.0;
                let u = y - mean;
                (-0.5 * u * u / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
        }
        LoadLaw::PointMass { .. } => unreachable!("point masses have no density"),
    }
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for
/// `int exp(-t^2) f(t) dt`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(HERMITE_NODES))
}

/// `ln p(z | k)`: log-density of a stage-1 reading when the pool holds `k`
/// positives, i.e. of `Y_k * eps` with `Y_k` the sum of `k` loads.
pub fn pool_reading_log_likelihood(z: f64, k: usize, noise: &NoiseModel, law: &LoadLaw) -> f64 {
    if z <= 0.0 || k == 0 {
        return f64::NEG_INFINITY;
    }
    match *law {
        LoadLaw::PointMass { value } => noise.log_likelihood(z, k as f64 * value),
        LoadLaw::Uniform { .. } => {
            // E_g[f_Y(z e^{-mu - sigma g}) e^{-mu - sigma g}], g ~ N(0, 1).
            let (nodes, weights) = hermite_rule();
            let sum: f64 = nodes
                .iter()
                .zip(weights)
                .map(|(&t, &w)| {
                    let shrink = (-noise.mu_eps - noise.sigma_eps * std::f64::consts::SQRT_2 * t).exp();
                    w * load_sum_density(z * shrink, k, law) * shrink
                })
                .sum();
            (sum / std::f64::consts::PI.sqrt()).ln()
        }
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unnormalised log-posterior `ln p(k) + ln p(z | k)` for `k = 1..=s`, with
/// a Binomial(s, p) prior restricted to `k >= 1`. Entry `k - 1` holds `k`.
pub fn pool_count_log_posterior(
    z1: f64,
    s: usize,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<Vec<f64>> {
    if !(z1 > 0.0 && z1.is_finite()) {
        return Err(Error::invalid(format!(
            "count estimation needs a positive pool reading, got {z1}"
        )));
    }
    if s == 0 || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("need s >= 1 and p in [0, 1], got s={s} p={p}")));
    }
    Ok((1..=s)
        .map(|k| {
            let prior = ln_binomial(s, k) + xlny(k as f64, p) + xlny((s - k) as f64, 1.0 - p);
            prior + pool_reading_log_likelihood(z1, k, noise, law)
        })
        .collect())
}

/// MAP estimate of the number of positives in a positive pool of size `s`.
///
/// Ties go to the smaller count. If the reading is impossible under every
/// count (all posteriors vanish), falls back to `z1 / mean load`, rounded
/// and clamped to `1..=s`.
pub fn estimate_pool_count(
    z1: f64,
    s: usize,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<usize> {
    let post = pool_count_log_posterior(z1, s, p, noise, law)?;
    let mut best = None;
    for (idx, &v) in post.iter().enumerate() {
        if v > f64::NEG_INFINITY && best.is_none_or(|(_, b)| v > b) {
            best = Some((idx + 1, v));
        }
    }
    Ok(match best {
        Some((k, _)) => k,
        None => ((z1 / law.mean()).round() as usize).clamp(1, s),
    })
}
