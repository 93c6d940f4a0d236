//! The subset score `f(T)`: prior mass of the support `T` times the
//! likelihood maximised over loads on `T` inside the load-law box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{OptimizerSettings, ReducedInstance};
use crate::error::{Error, Result};
use crate::model::{LoadLaw, NoiseModel};
use crate::rng::{derive_seed, stream};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Pool column indices, ascending.
    pub subset: Vec<usize>,
    /// `ln f(T)`; `-inf` when `T` leaves a positive row uncovered.
    pub log_score: f64,
    pub argmax_loads: Vec<f64>,
    /// Whether the best start stopped on its tolerance rather than its
    /// iteration limit.
    pub converged: bool,
}

impl CandidateScore {
    pub fn score(&self) -> f64 {
        self.log_score.exp()
    }
}

/// `n * v` with `0 * -inf = 0`.
fn times(n: usize, v: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * v
    }
}

/// Precomputed per-instance quantities shared by every candidate subset.
pub(crate) struct Scorer<'a> {
    pub(crate) reduced: &'a ReducedInstance,
    /// `ln z_i - mu` per active row.
    targets: Vec<f64>,
    sigma: f64,
    /// `sum_i (-ln z_i - ln sigma - ln sqrt(2 pi))`.
    row_const: f64,
    /// Active-row bitmask of each local survivor column.
    pub(crate) col_masks: Vec<u128>,
    pub(crate) full_mask: u128,
    lo: f64,
    hi: f64,
    ln_p_on: f64,
    ln_p_off: f64,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(reduced: &'a ReducedInstance, p: f64, noise: &NoiseModel, law: &LoadLaw) -> Result<Self> {
        noise.validate()?;
        law.validate()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("prevalence must lie in [0, 1], got {p}")));
        }
        let m = reduced.m_star();
        if m > 128 {
            return Err(Error::invalid(format!(
                "MAP decoding supports at most 128 positive rows, got {m}"
            )));
        }
        if reduced.sub_matrix.len() != m || reduced.sub_measurements.len() != m {
            return Err(Error::invalid("reduced instance has inconsistent row counts"));
        }
        if reduced.sub_matrix.iter().any(|r| r.len() != reduced.s_star()) {
            return Err(Error::invalid("reduced instance has inconsistent column counts"));
        }
        if let Some(z) = reduced.sub_measurements.iter().find(|&&z| !(z > 0.0 && z.is_finite())) {
            return Err(Error::invalid(format!("reduced readings must be positive, found {z}")));
        }
        let mut col_masks = vec![0u128; reduced.s_star()];
        for (i, row) in reduced.sub_matrix.iter().enumerate() {
            for (mask, &a) in col_masks.iter_mut().zip(row) {
                if a == 1 {
                    *mask |= 1 << i;
                }
            }
        }
        let full_mask = if m == 128 { u128::MAX } else { (1u128 << m) - 1 };
        let (lo, hi) = law.bounds();
        let row_const = reduced
            .sub_measurements
            .iter()
            .map(|z| -z.ln() - noise.sigma_eps.ln() - LN_SQRT_2PI)
            .sum();
        Ok(Self {
            reduced,
            targets: reduced.sub_measurements.iter().map(|z| z.ln() - noise.mu_eps).collect(),
            sigma: noise.sigma_eps,
            row_const,
            col_masks,
            full_mask,
            lo,
            hi,
            ln_p_on: p.ln() + law.log_density_in_box(),
            ln_p_off: (1.0 - p).ln(),
        })
    }

    /// Prior part of `ln f(T)` for `|T| = k`.
    pub(crate) fn log_prior(&self, k: usize) -> f64 {
        times(k, self.ln_p_on) + times(self.reduced.s_star() - k, self.ln_p_off)
    }

    /// Upper bound on `ln f(T)` over all subsets of size `k`.
    pub(crate) fn size_bound(&self, k: usize) -> f64 {
        self.log_prior(k) + self.row_const
    }

    pub(crate) fn covers(&self, local: &[usize]) -> bool {
        local.iter().fold(0u128, |acc, &j| acc | self.col_masks[j]) == self.full_mask
    }

    /// Active columns of `local` in each row.
    fn row_counts(&self, local: &[usize]) -> Vec<usize> {
        (0..self.targets.len())
            .map(|i| local.iter().filter(|&&j| self.col_masks[j] >> i & 1 == 1).count())
            .collect()
    }

    /// Upper bound on `ln f(T)`: each row's residual minimised independently
    /// over the range `[lo c_i, hi c_i]` its clean value can take.
    pub(crate) fn upper_bound(&self, local: &[usize]) -> f64 {
        let counts = self.row_counts(local);
        let mut phi = 0.0;
        for (&t, &c) in self.targets.iter().zip(&counts) {
            if c == 0 {
                return f64::NEG_INFINITY;
            }
            let (a, b) = ((self.lo * c as f64).ln(), (self.hi * c as f64).ln());
            let d = if t < a { a - t } else if t > b { t - b } else { 0.0 };
            phi += 0.5 * d * d;
        }
        self.log_prior(local.len()) + self.row_const - phi / (self.sigma * self.sigma)
    }

    pub(crate) fn score(&self, local: &[usize], opt: &OptimizerSettings) -> CandidateScore {
        let subset: Vec<usize> = local.iter().map(|&j| self.reduced.survivors[j]).collect();
        let d = local.len();
        let mid = 0.5 * (self.lo + self.hi);
        if !self.covers(local) {
            return CandidateScore {
                subset,
                log_score: f64::NEG_INFINITY,
                argmax_loads: vec![mid; d],
                converged: true,
            };
        }
        let problem = Problem::new(self, local);
        let (phi, loads, converged) = if self.lo == self.hi || d == 0 {
            let x = vec![self.lo; d];
            (problem.value(&x), x, true)
        } else {
            let mut rng = stream(derive_seed(opt.seed, &subset.iter().map(|&c| c as u64).collect::<Vec<_>>()));
            let floor = problem.lower_bound();
            let mut work = Work::new(self.targets.len(), d);
            let mut best: Option<(f64, Vec<f64>, bool)> = None;
            for start in 0..opt.starts {
                let x0 = if start == 0 {
                    problem.heuristic_start()
                } else {
                    (0..d).map(|_| rng.random_range(self.lo..=self.hi)).collect()
                };
                let (phi, x, conv) = problem.minimise(x0, opt, &mut work);
                if best.as_ref().is_none_or(|b| phi < b.0) {
                    best = Some((phi, x, conv));
                }
                // The box bound is attained: no start can do better.
                if best.as_ref().is_some_and(|b| b.0 <= floor + 1e-12 * (problem.s2 + floor)) {
                    break;
                }
            }
            best.expect("at least one start")
        };
        CandidateScore {
            subset,
            log_score: self.log_prior(d) + self.row_const - phi / (self.sigma * self.sigma),
            argmax_loads: loads,
            converged,
        }
    }
}

/// Least squares in log space: minimise `0.5 sum_i (t_i - ln (A x)_i)^2`
/// over the box. This is `sigma^2` times the negative log-likelihood, up to
/// a constant.
struct Problem {
    /// Positions within `T` of the columns active in each row.
    rows: Vec<Vec<usize>>,
    t: Vec<f64>,
    d: usize,
    lo: f64,
    hi: f64,
    /// `sigma^2`, converting values back to log-likelihood units.
    s2: f64,
}

/// Scratch space reused across iterations.
struct Work {
    y: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    free: Vec<usize>,
    sub: Vec<f64>,
    rhs: Vec<f64>,
    dir: Vec<f64>,
    cand: Vec<f64>,
}

impl Work {
    fn new(m: usize, d: usize) -> Self {
        Self {
            y: vec![0.0; m],
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
            free: Vec::with_capacity(d),
            sub: vec![0.0; d * d],
            rhs: vec![0.0; d],
            dir: vec![0.0; d],
            cand: vec![0.0; d],
        }
    }
}

/// Solves `(H + damping I) v = b` in place for a small dense SPD `H`
/// (row-major `n x n`). Returns `false` if the factorisation breaks down.
fn cholesky_solve(h: &mut [f64], b: &mut [f64], n: usize, damping: f64) -> bool {
    for j in 0..n {
        let mut diag = h[j * n + j] + damping;
        for k in 0..j {
            diag -= h[j * n + k] * h[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let diag = diag.sqrt();
        h[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = h[i * n + j];
            for k in 0..j {
                v -= h[i * n + k] * h[j * n + k];
            }
            h[i * n + j] = v / diag;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= h[i * n + k] * b[k];
        }
        b[i] = v / h[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= h[k * n + i] * b[k];
        }
        b[i] = v / h[i * n + i];
    }
    true
}

impl Problem {
    fn new(s: &Scorer<'_>, local: &[usize]) -> Self {
        let rows = (0..s.targets.len())
            .map(|i| {
                local
                    .iter()
                    .enumerate()
                    .filter(|(_, &j)| s.col_masks[j] >> i & 1 == 1)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        Self {
            rows,
            t: s.targets.clone(),
            d: local.len(),
            lo: s.lo,
            hi: s.hi,
            s2: s.sigma * s.sigma,
        }
    }

    fn clean_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, r) in y.iter_mut().zip(&self.rows) {
            *yi = r.iter().map(|&k| x[k]).sum();
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.t)
            .map(|(r, t)| {
                let y: f64 = r.iter().map(|&k| x[k]).sum();
                0.5 * (t - y.ln()).powi(2)
            })
            .sum()
    }

    fn lower_bound(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.t)
            .map(|(r, &t)| {
                let c = r.len() as f64;
                let (a, b) = ((self.lo * c).ln(), (self.hi * c).ln());
                let d = if t < a { a - t } else if t > b { t - b } else { 0.0 };
                0.5 * d * d
            })
            .sum()
    }

    /// Each load set to the average, over its rows, of the row's reading
    /// shared equally among the row's members.
    fn heuristic_start(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.d];
        let mut n = vec![0usize; self.d];
        for (r, &t) in self.rows.iter().zip(&self.t) {
            let share = t.exp() / r.len() as f64;
            for &k in r {
                sum[k] += share;
                n[k] += 1;
            }
        }
        sum.iter()
            .zip(&n)
            .map(|(&s, &n)| if n == 0 { self.lo } else { (s / n as f64).clamp(self.lo, self.hi) })
            .collect()
    }

    /// Projected Gauss-Newton with Armijo backtracking along the projection
    /// arc. Variables pinned at a bound by their gradient are held fixed.
    fn minimise(&self, mut x: Vec<f64>, opt: &OptimizerSettings, w: &mut Work) -> (f64, Vec<f64>, bool) {
        let d = self.d;
        let mut phi = self.value(&x);
        let edge = 1e-12 * self.hi;
        for _ in 0..opt.max_iters {
            self.clean_into(&x, &mut w.y);
            // Residuals t_i - ln y_i have Jacobian -a_ij / y_i.
            w.grad.iter_mut().for_each(|g| *g = 0.0);
            w.hess.iter_mut().for_each(|h| *h = 0.0);
            for ((r, &t), &y) in self.rows.iter().zip(&self.t).zip(&w.y) {
                let u = t - y.ln();
                let inv = 1.0 / y;
                let inv2 = inv * inv;
                for &k in r {
                    w.grad[k] -= u * inv;
                    for &l in r {
                        w.hess[k * d + l] += inv2;
                    }
                }
            }
            w.free.clear();
            let mut proj_step = 0.0f64;
            for k in 0..d {
                let g = w.grad[k];
                if !((x[k] <= self.lo + edge && g > 0.0) || (x[k] >= self.hi - edge && g < 0.0)) {
                    w.free.push(k);
                }
                proj_step = proj_step.max((x[k] - (x[k] - g).clamp(self.lo, self.hi)).abs());
            }
            if w.free.is_empty() || proj_step <= 1e-14 * self.hi {
                return (phi, x, true);
            }

            let nf = w.free.len();
            let scale = w.free.iter().map(|&k| w.hess[k * d + k]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut damping = 1e-10 * scale;
            loop {
                for (p, &kp) in w.free.iter().enumerate() {
                    w.rhs[p] = -w.grad[kp];
                    for (q, &kq) in w.free.iter().enumerate() {
                        w.sub[p * nf + q] = w.hess[kp * d + kq];
                    }
                }
                if cholesky_solve(&mut w.sub[..nf * nf], &mut w.rhs[..nf], nf, damping) {
                    break;
                }
                damping *= 100.0;
            }
            w.dir.iter_mut().for_each(|v| *v = 0.0);
            for (p, &k) in w.free.iter().enumerate() {
                w.dir[k] = w.rhs[p];
            }

            let mut accepted = self.backtrack(&x, phi, &w.grad, &w.dir, &mut w.cand);
            if accepted.is_none() {
                // Newton direction failed; fall back to steepest descent.
                let gmax = w.grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
                let len = (self.hi - self.lo) / gmax.max(f64::MIN_POSITIVE);
                for (v, g) in w.dir.iter_mut().zip(&w.grad) {
                    *v = -g * len;
                }
                accepted = self.backtrack(&x, phi, &w.grad, &w.dir, &mut w.cand);
            }
            let Some(phi_new) = accepted else {
                return (phi, x, true);
            };
            let decrease = phi - phi_new;
            x.copy_from_slice(&w.cand);
            phi = phi_new;
            if decrease <= opt.tolerance * (self.s2 + phi) {
                return (phi, x, true);
            }
        }
        (phi, x, false)
    }

    /// On success `cand` holds the accepted point.
    fn backtrack(&self, x: &[f64], phi: f64, grad: &[f64], dir: &[f64], cand: &mut [f64]) -> Option<f64> {
        let mut step = 1.0;
        for _ in 0..MAX_HALVINGS {
            let mut slope = 0.0;
            for k in 0..x.len() {
                cand[k] = (x[k] + step * dir[k]).clamp(self.lo, self.hi);
                slope += grad[k] * (cand[k] - x[k]);
            }
            if slope < 0.0 {
                let v = self.value(cand);
                if v <= phi + ARMIJO * slope {
                    return Some(v);
                }
            }
            step *= 0.5;
        }
        None
    }
}

/// `ln f(T)` and its maximising loads for the pool columns `subset`.
pub fn score_subset(
    reduced: &ReducedInstance,
    subset: &[usize],
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
    opt: &OptimizerSettings,
) -> Result<CandidateScore> {
    let scorer = Scorer::new(reduced, p, noise, law)?;
    let local = reduced.to_local(subset)?;
    Ok(scorer.score(&local, opt))
}

/// Gradient of `sum_i ln p(z_i | (A x)_i)` with respect to the loads on the
/// pool columns `subset` (in ascending column order).
pub fn log_posterior_gradient(
    reduced: &ReducedInstance,
    subset: &[usize],
    loads: &[f64],
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    noise.validate()?;
    let local = reduced.to_local(subset)?;
    if local.len() != subset.len() || loads.len() != local.len() {
        return Err(Error::invalid("need one load per distinct subset column"));
    }
    if let Some(v) = loads.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("loads must be positive and finite, found {v}")));
    }
    // Pair loads with columns in ascending order.
    let mut order: Vec<usize> = (0..subset.len()).collect();
    order.sort_by_key(|&k| subset[k]);
    let sorted_loads: Vec<f64> = order.iter().map(|&k| loads[k]).collect();
    let s2 = noise.sigma_eps * noise.sigma_eps;
    let mut grad = vec![0.0; local.len()];
    for (row, &z) in reduced.sub_matrix.iter().zip(&reduced.sub_measurements) {
        let y: f64 = local.iter().zip(&sorted_loads).filter(|(&j, _)| row[j] == 1).map(|(_, v)| v).sum();
        if y <= 0.0 {
            return Err(Error::invalid("a positive row has no active column in the subset"));
        }
        let w = (z.ln() - noise.mu_eps - y.ln()) / (s2 * y);
        for (g, &j) in grad.iter_mut().zip(&local) {
            if row[j] == 1 {
                *g += w;
            }
        }
    }
    // Back to the caller's order.
    let mut out = vec![0.0; grad.len()];
    for (pos, &k) in order.iter().enumerate() {
        out[k] = grad[pos];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::SensingMatrix;
    use crate::recovery::{comp, PoolInstance};

    fn reduced(rows: Vec<Vec<u8>>, z: Vec<f64>) -> ReducedInstance {
        comp(&PoolInstance::new(SensingMatrix::from_rows(rows).unwrap(), z).unwrap())
    }

    fn log_lik(r: &ReducedInstance, subset: &[usize], x: &[f64], noise: &NoiseModel) -> f64 {
        r.sub_matrix
            .iter()
            .zip(&r.sub_measurements)
            .map(|(row, &z)| {
                let y: f64 = subset.iter().zip(x).filter(|(&j, _)| row[j] == 1).map(|(_, v)| v).sum();
                noise.log_likelihood(z, y)
            })
            .sum()
    }

    #[test]
    fn single_reading_matches_grid_search() {
        let noise = NoiseModel::tapestry();
        let law = LoadLaw::default();
        let r = reduced(vec![vec![1]], vec![5.0]);
        let c = score_subset(&r, &[0], 0.01, &noise, &law, &OptimizerSettings::default()).unwrap();
        assert!((c.argmax_loads[0] - 5.0).abs() < 1e-6, "{:?}", c.argmax_loads);
        // Grid over [1, 1000] at step 0.001.
        let best = (0..=999_000)
            .map(|i| log_lik(&r, &[0], &[1.0 + i as f64 * 1e-3], &noise))
            .fold(f64::NEG_INFINITY, f64::max);
        let expected = (0.01f64).ln() - 999f64.ln() + best;
        assert!((c.log_score - expected).abs() < 1e-6, "{} vs {expected}", c.log_score);
    }

    #[test]
    fn uncovered_row_scores_zero() {
        let r = reduced(vec![vec![1, 0], vec![0, 1]], vec![3.0, 4.0]);
        let c = score_subset(&r, &[0], 0.1, &NoiseModel::tapestry(), &LoadLaw::default(), &OptimizerSettings::default())
            .unwrap();
        assert_eq!(c.score(), 0.0);
        let c = score_subset(&r, &[0, 1], 0.1, &NoiseModel::tapestry(), &LoadLaw::default(), &OptimizerSettings::default())
            .unwrap();
        assert!(c.score() > 0.0);
    }

    #[test]
    fn noiseless_limit_recovers_true_loads() {
        let noise = NoiseModel::new(1e-4, 0.0).unwrap();
        let law = LoadLaw::default();
        let rows = vec![
            vec![1, 1, 0, 0],
            vec![0, 1, 1, 0],
            vec![1, 0, 1, 1],
            vec![0, 0, 1, 1],
            vec![1, 1, 1, 1],
        ];
        let x = [120.0, 0.0, 730.0, 0.0];
        let mat = SensingMatrix::from_rows(rows).unwrap();
        let z = mat.apply(&x);
        let r = comp(&PoolInstance::new(mat, z).unwrap());
        let opt = OptimizerSettings::default();
        let truth = score_subset(&r, &[0, 2], 0.1, &noise, &law, &opt).unwrap();
        assert!((truth.argmax_loads[0] - 120.0).abs() < 1e-3);
        assert!((truth.argmax_loads[1] - 730.0).abs() < 1e-3);
        for other in [[0, 1], [1, 2], [0, 3], [1, 3], [2, 3]] {
            let c = score_subset(&r, &other, 0.1, &noise, &law, &opt).unwrap();
            assert!(c.log_score < truth.log_score, "{other:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let noise = NoiseModel::tapestry();
        let r = reduced(
            vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]],
            vec![150.0, 420.0, 700.0],
        );
        let x = [90.0, 55.0, 310.0];
        let g = log_posterior_gradient(&r, &[0, 1, 2], &x, &noise).unwrap();
        for k in 0..3 {
            let h = 1e-5;
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let fd = (log_lik(&r, &[0, 1, 2], &up, &noise) - log_lik(&r, &[0, 1, 2], &dn, &noise)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1e-8), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn gradient_stationary_and_sigma_scaling() {
        let r = reduced(vec![vec![1]], vec![5.0]);
        let noise = NoiseModel::tapestry();
        let g = log_posterior_gradient(&r, &[0], &[5.0], &noise).unwrap();
        assert!(g[0].abs() < 1e-8);
        let wide = NoiseModel::new(2.0 * noise.sigma_eps, 0.0).unwrap();
        let g1 = log_posterior_gradient(&r, &[0], &[7.0], &noise).unwrap()[0];
        let g2 = log_posterior_gradient(&r, &[0], &[7.0], &wide).unwrap()[0];
        assert!((g2 / g1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gradient_rejects_bad_points() {
        let r = reduced(vec![vec![1, 0], vec![0, 1]], vec![3.0, 4.0]);
        let noise = NoiseModel::tapestry();
        assert!(log_posterior_gradient(&r, &[0], &[1.0], &noise).is_err());
        assert!(log_posterior_gradient(&r, &[0, 1], &[0.0, 1.0], &noise).is_err());
    }
}
