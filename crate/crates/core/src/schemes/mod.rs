//! Complete testing protocols: individual testing, Dorfman, and the two-stage
//! adaptive schemes STAP-I, STAP-II and STAMP.
//!
//! Stage 1 pools `n = q s` samples into `q` consecutive blocks of size `s`.
//! The adaptive schemes then measure each positive pool (or a mixture of two
//! sparse positive pools) with a small design, and decode it with COMP and
//! MAP list decoding.

mod run;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{design_profile, SensingMatrix};
use crate::recovery::DecoderConfig;

pub use run::{
    run_dorfman, run_individual, run_scheme, run_stamp, run_stap1, run_stap2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Individual,
    Dorfman,
    Stap1,
    Stap2,
    Stamp,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Individual,
        Scheme::Dorfman,
        Scheme::Stap1,
        Scheme::Stap2,
        Scheme::Stamp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Individual => "individual",
            Scheme::Dorfman => "dorfman",
            Scheme::Stap1 => "stap1",
            Scheme::Stap2 => "stap2",
            Scheme::Stamp => "stamp",
        }
    }

    /// Whether the outcome depends on the list threshold.
    pub fn uses_decoder(self) -> bool {
        matches!(self, Scheme::Stap1 | Scheme::Stap2 | Scheme::Stamp)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where stage-2 designs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    /// A fresh draw from the design's weight profile for every pool.
    #[default]
    Resample,
    /// The shipped realisation of each design.
    Builtin,
}

/// Stage-2 row count for a mixed pair of estimated counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRows {
    pub pair: (usize, usize),
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Number of stage-1 pools.
    pub q: usize,
    /// Pool size.
    pub s: usize,
    /// STAP-I stage-2 rows.
    pub stage2_rows_fixed: usize,
    /// STAP-II stage-2 rows by estimated count; the largest key also covers
    /// every larger count.
    pub stage2_rows_by_khat: BTreeMap<usize, usize>,
    /// STAMP mixed-pool rows by unordered pair of estimated counts.
    pub mixed_rows_by_pair: Vec<PairRows>,
    /// Pools with an estimated count above this are measured alone.
    pub kappa: usize,
    pub matrix_source: MatrixSource,
    pub decoder: DecoderConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Stamp,
            q: 31,
            s: 31,
            stage2_rows_fixed: 6,
            stage2_rows_by_khat: BTreeMap::from([(1, 5), (2, 6), (3, 7), (4, 8)]),
            mixed_rows_by_pair: vec![
                PairRows { pair: (1, 1), rows: 9 },
                PairRows { pair: (2, 1), rows: 10 },
                PairRows { pair: (2, 2), rows: 11 },
            ],
            kappa: 2,
            matrix_source: MatrixSource::Resample,
            decoder: DecoderConfig::default(),
        }
    }
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, ..Self::default() }
    }

    pub fn n(&self) -> usize {
        self.q * self.s
    }

    /// STAP-II row count for a pool with estimated count `k_hat >= 1`.
    pub fn rows_for_khat(&self, k_hat: usize) -> Option<usize> {
        self.stage2_rows_by_khat.range(..=k_hat).next_back().map(|(_, &r)| r)
    }

    /// STAMP row count for a mixed pair, in either order.
    pub fn rows_for_pair(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.max(b), a.min(b));
        self.mixed_rows_by_pair
            .iter()
            .find(|p| (p.pair.0.max(p.pair.1), p.pair.0.min(p.pair.1)) == key)
            .map(|p| p.rows)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.q == 0 || self.s == 0 {
            return Err(Error::Config("q and s must be positive".into()));
        }
        if self.q * self.s != n {
            return Err(Error::Config(format!(
                "{} pools of {} do not cover n = {n}",
                self.q, self.s
            )));
        }
        if self.kappa == 0 {
            return Err(Error::Config("kappa must be at least 1".into()));
        }
        self.decoder.validate().map_err(|e| Error::Config(e.to_string()))?;
        let need = |rows: usize, width: usize, what: &str| -> Result<()> {
            if rows == 0 {
                return Err(Error::Config(format!("{what}: row counts must be positive")));
            }
            design_profile(rows, width)
                .map(|_| ())
                .map_err(|_| Error::Config(format!("{what}: no {rows}x{width} design is available")))
        };
        match self.scheme {
            Scheme::Individual | Scheme::Dorfman => {}
            Scheme::Stap1 => need(self.stage2_rows_fixed, self.s, "stage2_rows_fixed")?,
            Scheme::Stap2 | Scheme::Stamp => {
                if !self.stage2_rows_by_khat.contains_key(&1) {
                    return Err(Error::Config("stage2_rows_by_khat must have an entry for 1".into()));
                }
                for &r in self.stage2_rows_by_khat.values() {
                    need(r, self.s, "stage2_rows_by_khat")?;
                }
                if self.scheme == Scheme::Stamp {
                    for p in &self.mixed_rows_by_pair {
                        need(p.rows, 2 * self.s, "mixed_rows_by_pair")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Split of the sorted positive pools into singletons and pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// Positions into the sorted list, each part in ascending order.
    pub parts: Vec<Vec<usize>>,
    /// Number of leading pools with an estimated count above `kappa`.
    pub tau: usize,
    pub r: usize,
}

/// Pools `0..tau` (estimated count above `kappa`) stay alone, the rest are
/// paired in order, with a trailing singleton when an odd number remain.
pub fn partition_positive_pools(k_hats: &[usize], kappa: usize) -> Result<Partition> {
    if k_hats.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("estimated counts must be sorted non-increasing"));
    }
    let t = k_hats.len();
    let tau = k_hats.iter().take_while(|&&k| k > kappa).count();
    let mut parts: Vec<Vec<usize>> = (0..tau).map(|l| vec![l]).collect();
    let mut l = tau;
    while l < t {
        parts.push((l..(l + 2).min(t)).collect());
        l += 2;
    }
    let r = (t + tau).div_ceil(2);
    debug_assert_eq!(parts.len(), r);
    Ok(Partition { parts, tau, r })
}

/// One executed stage: the pools measured and the matrix applied to each.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: u8,
    pub pools: Vec<PlannedPool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPool {
    /// Signal coordinates, one per matrix column.
    pub members: Vec<usize>,
    pub matrix: SensingMatrix,
}

/// Sample transfers: ones over every executed matrix row.
pub fn count_pipetting(plan: &[StagePlan]) -> usize {
    plan.iter()
        .flat_map(|s| &s.pools)
        .map(|p| p.matrix.total_ones())
        .sum()
}

/// Support estimate at one list threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub support: Vec<usize>,
}

/// What happened to one decoded stage-2 instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDiagnostic {
    /// Stage-1 pool indices (two for a mixed pool).
    pub pools: Vec<usize>,
    pub k_hat: Vec<usize>,
    pub rows: usize,
    pub survivors: usize,
    pub enumerated: usize,
    pub pruned: usize,
    pub scored: usize,
    pub budget_exceeded: bool,
    /// True support within the pool survived COMP. Recorded, never used for
    /// decoding.
    pub comp_superset_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Estimate at the configured `alpha`.
    pub estimated_support: Vec<usize>,
    /// Estimates at every requested threshold, in request order.
    pub sweep: Vec<AlphaEstimate>,
    pub measurements_total: usize,
    pub measurements_stage1: usize,
    pub measurements_stage2: usize,
    pub pipetting_ops: usize,
    pub budget_flag: bool,
    pub pools: Vec<PoolDiagnostic>,
}

impl TrialOutcome {
    pub fn comp_violations(&self) -> usize {
        self.pools.iter().filter(|p| !p.comp_superset_ok).count()
    }
}
