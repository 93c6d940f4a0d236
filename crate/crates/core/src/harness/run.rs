use serde::{Deserialize, Serialize};

use super::{aggregate, score_trial, CellReport, CellTrial, ConfusionCounts, ExperimentConfig};
use crate::error::{Error, Result};
use crate::model::generate_signal_fixed_k;
use crate::rng::{derive_seed, label_word, stream};
use crate::schemes::{run_scheme, Scheme, SchemeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub alpha: Option<f64>,
    pub support: Vec<usize>,
    pub counts: ConfusionCounts,
}

/// One line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub truth: Vec<usize>,
    pub measurements_total: usize,
    pub measurements_stage1: usize,
    pub measurements_stage2: usize,
    pub pipetting_ops: usize,
    pub budget_flag: bool,
    pub decoded_instances: usize,
    pub comp_violations: usize,
    pub estimates: Vec<AlphaRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Ordered by scheme (config order), then k, then threshold.
    pub reports: Vec<CellReport>,
    /// Ordered by scheme, k, then trial index.
    pub trials: Vec<TrialRecord>,
}

/// Seed of one trial. The list threshold is not part of the tuple: every
/// threshold is read off the same decode, so a sweep compares thresholds on
/// identical signals and readings.
pub fn trial_seed(master: u64, scheme: Scheme, k: usize, trial: usize) -> u64 {
    derive_seed(master, &[label_word(scheme.label()), k as u64, trial as u64])
}

fn run_trial(cfg: &ExperimentConfig, sc: &SchemeConfig, k: usize, trial: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, sc.scheme, k, trial);
    let mut rng = stream(seed);
    let signal = generate_signal_fixed_k(cfg.n, k, &cfg.load_law, &mut rng)?;
    let alphas: &[f64] = if sc.scheme.uses_decoder() { &cfg.alpha_values } else { &[1.0] };
    let out = run_scheme(&signal, sc, alphas, &cfg.noise, &cfg.load_law, &mut rng)?;
    let estimates = out
        .sweep
        .iter()
        .map(|e| {
            Ok(AlphaRecord {
                alpha: sc.scheme.uses_decoder().then_some(e.alpha),
                counts: score_trial(&signal, &e.support)?,
                support: e.support.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for e in &estimates {
        if e.counts.total() != cfg.n {
            return Err(Error::Internal(format!("confusion counts sum to {} for n = {}", e.counts.total(), cfg.n)));
        }
    }
    Ok(TrialRecord {
        scheme: sc.scheme,
        k,
        trial,
        seed,
        truth: signal.support().to_vec(),
        measurements_total: out.measurements_total,
        measurements_stage1: out.measurements_stage1,
        measurements_stage2: out.measurements_stage2,
        pipetting_ops: out.pipetting_ops,
        budget_flag: out.budget_flag,
        decoded_instances: out.pools.len(),
        comp_violations: out.comp_violations(),
        estimates,
    })
}

type Job = (usize, usize, usize);

#[cfg(feature = "parallel")]
fn run_jobs(cfg: &ExperimentConfig, jobs: &[Job], threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    use rayon::prelude::*;
    let work = || {
        jobs.par_iter()
            .map(|&(c, k, t)| run_trial(cfg, &cfg.scheme_configs[c], k, t))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(cfg: &ExperimentConfig, jobs: &[Job], _threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    jobs.iter()
        .map(|&(c, k, t)| run_trial(cfg, &cfg.scheme_configs[c], k, t))
        .collect()
}

/// Runs every (scheme, k, trial) of the grid and aggregates each
/// (scheme, k, alpha) cell. Trials may run in any order on up to `threads`
/// workers; records are collected in grid order, so results depend only on
/// the config.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    if threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    let jobs: Vec<Job> = (0..cfg.scheme_configs.len())
        .flat_map(|c| cfg.k_values.iter().flat_map(move |&k| (0..cfg.trials).map(move |t| (c, k, t))))
        .collect();
    let trials = run_jobs(cfg, &jobs, threads)?;

    let mut reports = Vec::new();
    for cell in trials.chunks(cfg.trials) {
        let (scheme, k) = (cell[0].scheme, cell[0].k);
        for (i, alpha) in cell[0].estimates.iter().map(|e| e.alpha).enumerate() {
            let rows: Vec<CellTrial> = cell
                .iter()
                .map(|r| CellTrial {
                    counts: r.estimates[i].counts,
                    measurements: r.measurements_total,
                    pipetting_ops: r.pipetting_ops,
                    budget_flag: r.budget_flag,
                    comp_violations: r.comp_violations,
                })
                .collect();
            let stats = aggregate(&rows)?;
            reports.push(CellReport {
                scheme,
                k,
                alpha,
                meets_delta_minus: cfg.delta_minus.zip(stats.sensitivity).map(|(d, s)| 1.0 - s <= d),
                meets_delta_plus: cfg.delta_plus.zip(stats.specificity).map(|(d, s)| 1.0 - s <= d),
                stats,
            });
        }
    }
    Ok(ExperimentResult { reports, trials })
}
