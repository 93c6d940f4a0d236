use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design;
use crate::error::{Error, Result};
use crate::recovery::ReducedInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpResult {
    pub estimate: Vec<f64>,
    /// Columns with a positive coefficient, ascending.
    pub support: Vec<usize>,
    /// Residual norm after each iteration, starting with `||z||`.
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
}

/// Least squares restricted to `cols`.
fn restricted_lsq(a: &DMatrix<f64>, z: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(cols);
    sub.svd(true, true)
        .solve(z, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols.len()))
}

/// Lawson-Hanson non-negative least squares: `argmin ||z - A x||_2` over
/// `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-10 * a.amax().max(1.0) * z.amax().max(1.0);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (z - a * &x);
        let Some((j, &wj)) = w
            .iter()
            .enumerate()
            .filter(|(j, _)| !passive[*j])
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        else {
            break;
        };
        if wj <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sol = restricted_lsq(a, z, &cols);
            if sol.iter().all(|&v| v > 0.0) {
                for (&k, &v) in cols.iter().zip(sol.iter()) {
                    x[k] = v;
                }
                break;
            }
            // Step towards the unconstrained solution until a coordinate hits zero.
            let alpha = cols
                .iter()
                .zip(sol.iter())
                .filter(|(_, &v)| v <= 0.0)
                .map(|(&k, &v)| x[k] / (x[k] - v))
                .fold(f64::INFINITY, f64::min);
            for (&k, &v) in cols.iter().zip(sol.iter()) {
                x[k] += alpha * (v - x[k]);
                if x[k] <= tol {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Non-negative orthogonal matching pursuit.
///
/// Each iteration adds the column most correlated with the residual and
/// refits all selected columns by non-negative least squares. Stops when the
/// residual norm is at most `epsilon_residual`, when `m*` columns are
/// selected, or when no column correlates positively with the residual.
pub fn nn_omp(reduced: &ReducedInstance, epsilon_residual: f64) -> Result<OmpResult> {
    if !(epsilon_residual >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon_residual}")));
    }
    let (m, s) = (reduced.m_star(), reduced.s_star());
    let (a, z) = design(reduced);
    let mut x = vec![0.0; s];
    let mut residual = z.clone();
    let mut norms = vec![residual.norm()];
    let mut selected: Vec<usize> = Vec::new();
    while residual.norm() > epsilon_residual && selected.len() < m.min(s) {
        let corr = a.transpose() * &residual;
        let Some((j, &cj)) = corr
            .iter()
            .enumerate()
            .filter(|(j, _)| !selected.contains(j))
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        else {
            break;
        };
        if cj <= 0.0 {
            break;
        }
        selected.push(j);
        let sub = a.select_columns(&selected);
        let mut coef = nnls(&sub, &z);
        // Exact fits leave rounding-level weights on redundant columns.
        let floor = 1e-9 * coef.amax();
        coef.iter_mut().filter(|v| **v <= floor).for_each(|v| *v = 0.0);
        x.iter_mut().for_each(|v| *v = 0.0);
        for (&k, &v) in selected.iter().zip(coef.iter()) {
            x[k] = v;
        }
        residual = &z - &sub * coef;
        norms.push(residual.norm());
    }
    let support = (0..s).filter(|&j| x[j] > 0.0).collect();
    Ok(OmpResult {
        estimate: x,
        support,
        iterations: norms.len() - 1,
        residual_norms: norms,
    })
}
