use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::{trial_seed, CellReport, ExperimentConfig, ExperimentResult};
use crate::error::{Error, Result};
use crate::schemes::Scheme;

/// Decimal places for rates and measurement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Four places, the full report.
    Full,
    /// Two places, the compact table view.
    Compact,
}

const HEADER: &str = "scheme,k,alpha,m_min,m_max,m_std,m_ave,sensitivity,specificity,npv,ppv,budget_flags";

pub fn results_csv(reports: &[CellReport], precision: Precision) -> String {
    let places = match precision {
        Precision::Full => 4,
        Precision::Compact => 2,
    };
    let num = |v: f64| format!("{v:.places$}");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in reports {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.k,
            r.alpha.map(|a| a.to_string()).unwrap_or_default(),
            s.m_min,
            s.m_max,
            num(s.m_std),
            num(s.m_ave),
            opt(s.sensitivity),
            opt(s.specificity),
            opt(s.npv),
            opt(s.ppv),
            s.budget_flags,
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `results_2dp.csv`, `summary.json`, `trials.jsonl`
/// and `meta.json` into `dir`, creating it if needed.
pub fn write_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("results.csv"), &results_csv(&result.reports, Precision::Full))?;
    write(&dir.join("results_2dp.csv"), &results_csv(&result.reports, Precision::Compact))?;
    let summary = serde_json::to_string_pretty(&result.reports).map_err(|e| Error::Internal(e.to_string()))?;
    write(&dir.join("summary.json"), &summary)?;

    let mut lines = String::new();
    for t in &result.trials {
        lines.push_str(&serde_json::to_string(t).map_err(|e| Error::Internal(e.to_string()))?);
        lines.push('\n');
    }
    write(&dir.join("trials.jsonl"), &lines)?;

    let example = trial_seed(cfg.master_seed, Scheme::Stamp, 0, 0);
    let meta = json!({
        "config": cfg,
        "master_seed": cfg.master_seed,
        "seed_derivation": {
            "tuple": ["master_seed", "fnv1a64(scheme label)", "k", "trial index"],
            "fold": "h = splitmix64(master_seed); h = splitmix64(h ^ word) per tuple word",
            "stream": "ChaCha8 seeded from h via seed_from_u64",
            "example": {"scheme": "stamp", "k": 0, "trial": 0, "seed": example},
        },
        "versions": {
            "adaptive-pooling": env!("CARGO_PKG_VERSION"),
        },
    });
    let meta = serde_json::to_string_pretty(&meta).map_err(|e| Error::Internal(e.to_string()))?;
    write(&dir.join("meta.json"), &meta)
}
