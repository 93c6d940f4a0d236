//! Compressed-sensing baselines run on COMP-reduced instances: NN-LASSO,
//! NN-OMP and sparse Bayesian learning. Each treats the noise as additive
//! and returns a non-negative estimate over the survivors, which
//! [`support_from_estimate`] turns into a support.

mod lasso;
mod omp;
mod sbl;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NoiseModel;
use crate::recovery::ReducedInstance;

pub use lasso::nn_lasso;
pub use omp::{nn_omp, nnls, OmpResult};
pub use sbl::{sbl, sbl_log_evidence, SblResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SblConfig {
    pub sigma_init: f64,
    pub sigma_j_init: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
}

impl Default for SblConfig {
    fn default() -> Self {
        Self {
            sigma_init: 10.0,
            sigma_j_init: 500.0,
            max_iters: 1000,
            convergence_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// NN-LASSO l1 budget; `None` uses [`default_lambda`].
    pub lambda: Option<f64>,
    /// NN-OMP residual stop; `None` uses [`default_epsilon`].
    pub epsilon_residual: Option<f64>,
    pub sbl: SblConfig,
    /// Entries strictly above this count as support.
    pub support_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            epsilon_residual: None,
            sbl: SblConfig::default(),
            support_threshold: 0.2,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !self.lambda.is_none_or(nonneg) || !self.epsilon_residual.is_none_or(nonneg) || !nonneg(self.support_threshold) {
            return Err(Error::invalid("baseline parameters must be non-negative and finite"));
        }
        let s = &self.sbl;
        if !(s.sigma_init > 0.0 && s.sigma_j_init > 0.0 && nonneg(s.convergence_tol) && s.max_iters >= 1) {
            return Err(Error::invalid("SBL needs positive initial scales and max_iters >= 1"));
        }
        Ok(())
    }
}

/// `1.1 ||z||_1 / (min column weight of A)`.
pub fn default_lambda(reduced: &ReducedInstance) -> f64 {
    let min_w = (0..reduced.s_star())
        .map(|j| reduced.sub_matrix.iter().filter(|r| r[j] == 1).count())
        .filter(|&w| w > 0)
        .min()
        .unwrap_or(1);
    1.1 * reduced.sub_measurements.iter().sum::<f64>() / min_w as f64
}

/// `sigma_eps ||z||_2`, the first-order size of the multiplicative noise.
pub fn default_epsilon(reduced: &ReducedInstance, noise: &NoiseModel) -> f64 {
    noise.sigma_eps * reduced.sub_measurements.iter().map(|z| z * z).sum::<f64>().sqrt()
}

/// Indices with `x_j > threshold`.
pub fn support_from_estimate(x: &[f64], threshold: f64) -> Vec<usize> {
    (0..x.len()).filter(|&j| x[j] > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    NnLasso,
    NnOmp,
    Sbl,
}

/// Runs a baseline and maps its thresholded support to pool columns.
pub fn baseline_support(
    kind: Baseline,
    reduced: &ReducedInstance,
    cfg: &BaselineConfig,
    noise: &NoiseModel,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if reduced.s_star() == 0 || reduced.m_star() == 0 {
        return Ok(Vec::new());
    }
    let x = match kind {
        Baseline::NnLasso => nn_lasso(reduced, cfg.lambda.unwrap_or_else(|| default_lambda(reduced)))?,
        Baseline::NnOmp => {
            nn_omp(reduced, cfg.epsilon_residual.unwrap_or_else(|| default_epsilon(reduced, noise)))?.estimate
        }
        Baseline::Sbl => sbl(reduced, &cfg.sbl)?.estimate,
    };
    Ok(support_from_estimate(&x, cfg.support_threshold)
        .into_iter()
        .map(|j| reduced.survivors[j])
        .collect())
}

pub(crate) fn design(reduced: &ReducedInstance) -> (DMatrix<f64>, DVector<f64>) {
    let (m, s) = (reduced.m_star(), reduced.s_star());
    let a = DMatrix::from_fn(m, s, |i, j| reduced.sub_matrix[i][j] as f64);
    (a, DVector::from_column_slice(&reduced.sub_measurements))
}
