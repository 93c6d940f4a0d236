//! Monte-Carlo experiments over schemes, positive counts and list
//! thresholds, with per-trial confusion counts and per-cell aggregates.

mod output;
mod run;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LoadLaw, NoiseModel, Signal};
use crate::schemes::{Scheme, SchemeConfig};

pub use output::{results_csv, write_outputs, Precision};
pub use run::{run_experiment, trial_seed, AlphaRecord, ExperimentResult, TrialRecord};

pub const DEFAULT_ALPHAS: [f64; 5] = [0.9, 0.5, 0.1, 0.01, 0.001];

/// One experiment grid. Field names are the JSON config schema; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Each trial draws a signal with exactly `k` positives.
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub scheme_configs: Vec<SchemeConfig>,
    /// List thresholds reported for decoding schemes.
    pub alpha_values: Vec<f64>,
    pub noise: NoiseModel,
    pub load_law: LoadLaw,
    /// Output directory; the CLI's `--out` takes precedence.
    pub out_dir: Option<String>,
    /// Target false-negative rate, reported against but never optimised.
    pub delta_minus: Option<f64>,
    /// Target false-positive rate.
    pub delta_plus: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 961,
            k_values: vec![5, 10, 15],
            trials: 100,
            master_seed: 1,
            scheme_configs: Scheme::ALL.iter().map(|&s| SchemeConfig::new(s)).collect(),
            alpha_values: DEFAULT_ALPHAS.to_vec(),
            noise: NoiseModel::tapestry(),
            load_law: LoadLaw::default(),
            out_dir: None,
            delta_minus: None,
            delta_plus: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k_values.is_empty() || self.scheme_configs.is_empty() {
            return bad("k_values and scheme_configs must be non-empty".into());
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k > self.n) {
            return bad(format!("k = {k} exceeds n = {}", self.n));
        }
        if self.alpha_values.is_empty() || self.alpha_values.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return bad("alpha_values must be non-empty and lie in (0, 1]".into());
        }
        let mut seen = BTreeSet::new();
        for sc in &self.scheme_configs {
            if !seen.insert(sc.scheme.label()) {
                return bad(format!("scheme {} is listed twice", sc.scheme));
            }
            sc.validate(self.n)?;
        }
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.load_law.validate().map_err(|e| Error::Config(e.to_string()))?;
        for d in [self.delta_minus, self.delta_plus].into_iter().flatten() {
            if !(0.0..=1.0).contains(&d) {
                return bad(format!("rate target {d} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.true_neg, self.true_neg + self.false_pos)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.true_neg, self.true_neg + self.false_neg)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }
}

/// Confusion counts of `estimate` (a set of indices) against the support of
/// `truth`.
pub fn score_trial(truth: &Signal, estimate: &[usize]) -> Result<ConfusionCounts> {
    let n = truth.len();
    let mut declared = vec![false; n];
    for &j in estimate {
        if j >= n {
            return Err(Error::invalid(format!("estimate index {j} is outside 0..{n}")));
        }
        declared[j] = true;
    }
    let mut c = ConfusionCounts::default();
    for (j, &d) in declared.iter().enumerate() {
        match (truth.is_positive(j), d) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_neg += 1,
            (false, true) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// What [`aggregate`] needs from one trial of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTrial {
    pub counts: ConfusionCounts,
    pub measurements: usize,
    pub pipetting_ops: usize,
    pub budget_flag: bool,
    pub comp_violations: usize,
}

/// Summary of one (scheme, k, alpha) cell. Rates are means of per-trial
/// ratios; trials whose denominator is zero are left out of that mean, and a
/// rate is `None` when every trial was left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub trials: usize,
    pub m_min: usize,
    pub m_max: usize,
    /// Sample standard deviation (zero for a single trial).
    pub m_std: f64,
    pub m_ave: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
    pub ppv: Option<f64>,
    pub pipetting_ave: f64,
    pub budget_flags: usize,
    pub comp_violations: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values.flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn aggregate(trials: &[CellTrial]) -> Result<CellStats> {
    if trials.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty cell"));
    }
    let t = trials.len() as f64;
    let m: Vec<f64> = trials.iter().map(|c| c.measurements as f64).collect();
    let m_ave = m.iter().sum::<f64>() / t;
    let m_std = if trials.len() > 1 {
        (m.iter().map(|v| (v - m_ave).powi(2)).sum::<f64>() / (t - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CellStats {
        trials: trials.len(),
        m_min: trials.iter().map(|c| c.measurements).min().unwrap_or(0),
        m_max: trials.iter().map(|c| c.measurements).max().unwrap_or(0),
        m_std,
        m_ave,
        sensitivity: mean_defined(trials.iter().map(|c| c.counts.sensitivity())),
        specificity: mean_defined(trials.iter().map(|c| c.counts.specificity())),
        npv: mean_defined(trials.iter().map(|c| c.counts.npv())),
        ppv: mean_defined(trials.iter().map(|c| c.counts.ppv())),
        pipetting_ave: trials.iter().map(|c| c.pipetting_ops as f64).sum::<f64>() / t,
        budget_flags: trials.iter().filter(|c| c.budget_flag).count(),
        comp_violations: trials.iter().map(|c| c.comp_violations).sum(),
    })
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scheme: Scheme,
    pub k: usize,
    /// `None` for schemes whose estimate does not depend on a threshold.
    pub alpha: Option<f64>,
    #[serde(flatten)]
    pub stats: CellStats,
    /// Whether `1 - sensitivity <= delta_minus`, when a target was given.
    pub meets_delta_minus: Option<bool>,
    pub meets_delta_plus: Option<bool>,
}

/// The threshold with the largest sensitivity + specificity for a
/// (scheme, k) pair; ties go to the larger threshold.
pub fn best_alpha_cell(reports: &[CellReport], scheme: Scheme, k: usize) -> Option<&CellReport> {
    let score = |r: &CellReport| r.stats.sensitivity.unwrap_or(0.0) + r.stats.specificity.unwrap_or(0.0);
    reports
        .iter()
        .filter(|r| r.scheme == scheme && r.k == k)
        .fold(None, |best: Option<&CellReport>, r| match best {
            Some(b) if score(b) > score(r) => Some(b),
            Some(b) if score(b) == score(r) && b.alpha.unwrap_or(1.0) >= r.alpha.unwrap_or(1.0) => Some(b),
            _ => Some(r),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(n: usize, support: &[usize]) -> Signal {
        let mut v = vec![0.0; n];
        for &j in support {
            v[j] = 5.0;
        }
        Signal::from_values(v).unwrap()
    }

    #[test]
    fn scoring_examples() {
        let c = score_trial(&signal(4, &[0, 1]), &[1, 2]).unwrap();
        assert_eq!(c, ConfusionCounts { true_pos: 1, false_pos: 1, true_neg: 1, false_neg: 1 });
        let c = score_trial(&signal(4, &[0, 1]), &[0, 1]).unwrap();
        assert_eq!((c.false_neg, c.false_pos), (0, 0));
        let c = score_trial(&signal(10, &[2, 5, 7]), &[]).unwrap();
        assert_eq!((c.false_neg, c.true_neg), (3, 7));
        assert!(score_trial(&signal(4, &[0]), &[4]).is_err());
    }

    fn cell(counts: ConfusionCounts, m: usize) -> CellTrial {
        CellTrial { counts, measurements: m, pipetting_ops: 0, budget_flag: false, comp_violations: 0 }
    }

    #[test]
    fn aggregation_examples() {
        let perfect = ConfusionCounts { true_pos: 3, false_pos: 0, true_neg: 7, false_neg: 0 };
        let s = aggregate(&[cell(perfect, 40)]).unwrap();
        assert_eq!((s.sensitivity, s.specificity), (Some(1.0), Some(1.0)));
        assert_eq!((s.m_min, s.m_max, s.m_std), (40, 40, 0.0));

        let a = ConfusionCounts { true_pos: 50, false_pos: 0, true_neg: 50, false_neg: 0 };
        let b = ConfusionCounts { true_pos: 49, false_pos: 0, true_neg: 50, false_neg: 1 };
        let s = aggregate(&[cell(a, 10), cell(b, 20)]).unwrap();
        assert!((s.sensitivity.unwrap() - 0.99).abs() < 1e-12);
        assert_eq!(s.m_ave, 15.0);
        assert!((s.m_std - 50f64.sqrt()).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn zero_denominators_are_left_out() {
        let none_positive = ConfusionCounts { true_pos: 0, false_pos: 0, true_neg: 10, false_neg: 0 };
        let half = ConfusionCounts { true_pos: 1, false_pos: 0, true_neg: 8, false_neg: 1 };
        let s = aggregate(&[cell(none_positive, 1), cell(half, 1)]).unwrap();
        assert_eq!(s.sensitivity, Some(0.5));
        assert_eq!(s.ppv, Some(1.0));
        let s = aggregate(&[cell(none_positive, 1)]).unwrap();
        assert_eq!((s.sensitivity, s.ppv), (None, None));
    }

    #[test]
    fn config_round_trip_and_rejection() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"trails": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"trials": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"k_values": [1000]}"#).is_err());
        let twice = r#"{"scheme_configs": [{"scheme": "stamp"}, {"scheme": "stamp"}]}"#;
        assert!(ExperimentConfig::from_json(twice).is_err());
    }

    #[test]
    fn best_alpha_prefers_larger_threshold_on_ties() {
        let stats = |sens: f64| CellStats {
            trials: 1, m_min: 1, m_max: 1, m_std: 0.0, m_ave: 1.0,
            sensitivity: Some(sens), specificity: Some(1.0), npv: None, ppv: None,
            pipetting_ave: 0.0, budget_flags: 0, comp_violations: 0,
        };
        let row = |alpha: f64, sens: f64| CellReport {
            scheme: Scheme::Stamp, k: 10, alpha: Some(alpha), stats: stats(sens),
            meets_delta_minus: None, meets_delta_plus: None,
        };
        let rows = vec![row(0.9, 0.98), row(0.5, 0.99), row(0.1, 0.99)];
        assert_eq!(best_alpha_cell(&rows, Scheme::Stamp, 10).unwrap().alpha, Some(0.5));
        assert!(best_alpha_cell(&rows, Scheme::Stap1, 10).is_none());
    }
}
