//! Support recovery for a single (possibly mixed) pool.
//!
//! The pipeline is COMP ([`comp`]) to discard every column seen in a zero
//! reading, then MAP list decoding ([`map_list_decode`],
//! [`map_list_decode_mixed`]): each candidate subset `T` of the survivors
//! with size near the estimated count is scored by its maximised posterior
//! density ([`score_subset`]) and the estimate is the union of all subsets
//! scoring within a factor `alpha` of the best.

mod comp;
mod count;
mod list;
mod score;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::SensingMatrix;

pub use comp::comp;
pub use count::{
    estimate_pool_count, estimate_prevalence, gauss_hermite, irwin_hall_density,
    pool_count_log_posterior, pool_reading_log_likelihood,
};
pub use list::{
    list_scores, list_scores_mixed, map_list_decode, map_list_decode_mixed, size_window, ListDecode,
};
pub use score::{log_posterior_gradient, score_subset, CandidateScore};

/// Measurements of one pool: its decoding matrix and noisy readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInstance {
    pub matrix: SensingMatrix,
    pub noisy: Vec<f64>,
}

impl PoolInstance {
    pub fn new(matrix: SensingMatrix, noisy: Vec<f64>) -> Result<Self> {
        if noisy.len() != matrix.rows() {
            return Err(Error::invalid(format!(
                "{} readings for a {}-row matrix",
                noisy.len(),
                matrix.rows()
            )));
        }
        if let Some(z) = noisy.iter().find(|z| !(**z >= 0.0 && z.is_finite())) {
            return Err(Error::invalid(format!("readings must be finite and non-negative, found {z}")));
        }
        Ok(Self { matrix, noisy })
    }

    pub fn pool_width(&self) -> usize {
        self.matrix.cols()
    }
}

/// A pool instance after COMP: surviving columns and positive rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedInstance {
    /// Surviving pool columns, ascending.
    pub survivors: Vec<usize>,
    /// Rows with a strictly positive reading, ascending.
    pub active_rows: Vec<usize>,
    /// `active_rows x survivors` restriction of the matrix.
    pub sub_matrix: Vec<Vec<u8>>,
    pub sub_measurements: Vec<f64>,
    pub pool_width: usize,
}

impl ReducedInstance {
    pub fn m_star(&self) -> usize {
        self.active_rows.len()
    }

    pub fn s_star(&self) -> usize {
        self.survivors.len()
    }

    /// Local survivor index of pool column `col`.
    pub fn local_index(&self, col: usize) -> Option<usize> {
        self.survivors.binary_search(&col).ok()
    }

    pub(crate) fn to_local(&self, subset: &[usize]) -> Result<Vec<usize>> {
        let mut local = subset
            .iter()
            .map(|&c| {
                self.local_index(c).ok_or_else(|| {
                    Error::invalid(format!("column {c} is not a COMP survivor"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        local.sort_unstable();
        local.dedup();
        Ok(local)
    }
}

/// Prior on a coordinate being positive: supplied, or estimated from the
/// fraction of positive stage-1 pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PrevalenceMode {
    Known { p: f64 },
    Estimate,
}

impl Default for PrevalenceMode {
    fn default() -> Self {
        PrevalenceMode::Estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub starts: usize,
    pub max_iters: usize,
    /// Relative decrease of the negative log-likelihood at which a start stops.
    pub tolerance: f64,
    /// Seeds the random starts; each subset derives its own stream from it.
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iters: 500,
            tolerance: 1e-9,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// List threshold: keep every subset with `f(T) >= alpha * f*`.
    pub alpha: f64,
    /// Sizes `k_hat - k_window ..= k_hat + k_window` are enumerated.
    pub k_window: usize,
    /// Maximum number of covering candidate subsets per pool.
    pub enumeration_cap: usize,
    pub optimizer: OptimizerSettings,
    pub prevalence: PrevalenceMode,
    /// Smallest threshold the scored list will be queried at; subsets that
    /// provably cannot reach it are not optimised. `None` means `alpha`.
    pub alpha_floor: Option<f64>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            k_window: 1,
            enumeration_cap: 200_000,
            optimizer: OptimizerSettings::default(),
            prevalence: PrevalenceMode::Estimate,
            alpha_floor: None,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_alpha = |a: f64| a > 0.0 && a <= 1.0;
        if !ok_alpha(self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if let Some(f) = self.alpha_floor {
            if !ok_alpha(f) {
                return Err(Error::invalid(format!("alpha_floor must lie in (0, 1], got {f}")));
            }
        }
        if self.enumeration_cap == 0 || self.optimizer.starts == 0 || self.optimizer.max_iters == 0 {
            return Err(Error::invalid("enumeration cap, optimizer starts and iterations must be positive"));
        }
        if let PrevalenceMode::Known { p } = self.prevalence {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("known prevalence must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub(crate) fn floor(&self) -> f64 {
        self.alpha_floor.unwrap_or(self.alpha).min(self.alpha)
    }
}
