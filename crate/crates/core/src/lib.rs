//! Two-stage adaptive pooled testing with quantitative (qPCR-style) readings.
//!
//! The crate simulates sparse viral-load signals, measures them through
//! binary pooling matrices under multiplicative log-normal noise, and
//! recovers the support with COMP followed by MAP list decoding. Around that
//! core sit the testing protocols (individual, Dorfman, 2-STAP-I/II,
//! 2-STAMP), the compressed-sensing baselines (NN-LASSO, NN-OMP, SBL), and
//! a seeded Monte-Carlo harness that produces CSV/JSON reports.
//!
//! Module map:
//! - [`model`]: signals, load laws, the noise channel, cycle-count conversion.
//! - [`matrices`]: sensing matrices, weight profiles, Kirkman systems, file IO.
//! - [`recovery`]: COMP, prevalence and per-pool count estimation, subset
//!   scoring and list decoding.
//! - [`schemes`]: the testing protocols and their measurement budgets.
//! - [`baselines`]: NN-LASSO, NN-OMP and SBL on COMP-reduced instances.
//! - [`harness`]: experiment configuration, trial scoring, aggregation, output.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod matrices;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};
