//! Browser bindings. Every export returns a JSON string; the page parses it.
//!
//! The `*_json` functions hold the logic so it can be tested natively.

use adaptive_pooling::harness::{score_trial, trial_seed};
use adaptive_pooling::matrices::parse_matrix;
use adaptive_pooling::model::{generate_signal_fixed_k, LoadLaw, NoiseModel};
use adaptive_pooling::recovery::{comp, estimate_pool_count, list_scores, pool_count_log_posterior, DecoderConfig, PoolInstance};
use adaptive_pooling::rng::stream;
use adaptive_pooling::schemes::{run_scheme, Scheme, SchemeConfig};
use adaptive_pooling::Error;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest candidate list shipped back to the page.
const MAX_LISTED: usize = 25;

fn internal(e: serde_json::Error) -> Error {
    Error::Internal(e.to_string())
}

/// Posterior over the number of positives in one positive pool.
pub fn pool_count_json(reading: f64, pool_size: usize, prevalence: f64) -> Result<String, Error> {
    let noise = NoiseModel::tapestry();
    let law = LoadLaw::default();
    let log_post = pool_count_log_posterior(reading, pool_size, prevalence, &noise, &law)?;
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = if top == f64::NEG_INFINITY {
        vec![0.0; log_post.len()]
    } else {
        let w: Vec<f64> = log_post.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    };
    let k_hat = estimate_pool_count(reading, pool_size, prevalence, &noise, &law)?;
    Ok(json!({ "k_hat": k_hat, "posterior": probs }).to_string())
}

#[derive(Serialize)]
struct TrialView {
    scheme: Scheme,
    k: usize,
    seed: u64,
    truth: Vec<usize>,
    estimate: Vec<usize>,
    measurements: usize,
    stage1: usize,
    stage2: usize,
    pipetting_ops: usize,
    decoded_pools: usize,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
}

/// One trial on 961 samples. Matches trial 0 of a simulation run with
/// master seed `seed`.
pub fn simulate_trial_json(scheme: &str, k: usize, seed: u64, alpha: f64) -> Result<String, Error> {
    let scheme: Scheme = serde_json::from_value(json!(scheme))
        .map_err(|_| Error::InvalidArgument(format!("unknown scheme {scheme:?}")))?;
    let cfg = SchemeConfig::new(scheme);
    let noise = NoiseModel::tapestry();
    let law = LoadLaw::default();
    let trial = trial_seed(seed, scheme, k, 0);
    let mut rng = stream(trial);
    let signal = generate_signal_fixed_k(cfg.n(), k, &law, &mut rng)?;
    let out = run_scheme(&signal, &cfg, &[alpha], &noise, &law, &mut rng)?;
    let estimate = out.sweep[0].support.clone();
    let counts = score_trial(&signal, &estimate)?;
    let view = TrialView {
        scheme,
        k,
        seed: trial,
        truth: signal.support().to_vec(),
        estimate,
        measurements: out.measurements_total,
        stage1: out.measurements_stage1,
        stage2: out.measurements_stage2,
        pipetting_ops: out.pipetting_ops,
        decoded_pools: out.pools.len(),
        true_positives: counts.true_pos,
        false_positives: counts.false_pos,
        false_negatives: counts.false_neg,
        sensitivity: counts.sensitivity(),
        specificity: counts.specificity(),
    };
    serde_json::to_string(&view).map_err(internal)
}

/// List-decodes one pool. `k_hat == 0` estimates the count from the first
/// all-ones row.
pub fn decode_json(matrix: &str, readings: &str, alpha: f64, k_hat: usize, prevalence: f64) -> Result<String, Error> {
    // Text areas lose the strict layout: trailing spaces, CRLF, final newline.
    let mut text: String = matrix.trim().lines().map(|l| l.trim().to_string() + "\n").collect();
    text.retain(|c| c != '\r');
    let mat = parse_matrix(&text, "matrix")?;
    let readings = readings
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad reading {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let width = mat.cols();
    let instance = PoolInstance::new(mat, readings)?;
    let noise = NoiseModel::tapestry();
    let law = LoadLaw::default();
    let k_hat = if k_hat > 0 {
        k_hat
    } else {
        let row = (0..instance.matrix.rows())
            .find(|&i| instance.matrix.row_weights()[i] == width)
            .ok_or_else(|| Error::InvalidArgument("no all-ones row to estimate the count from; set k".into()))?;
        match instance.noisy[row] {
            z if z > 0.0 => estimate_pool_count(z, width, prevalence, &noise, &law)?,
            _ => 0,
        }
    };
    let reduced = comp(&instance);
    if reduced.active_rows.is_empty() {
        return Ok(json!({ "k_hat": k_hat, "survivors": reduced.survivors, "estimate": reduced.survivors, "candidates": [] }).to_string());
    }
    let cfg = DecoderConfig { alpha, ..DecoderConfig::default() };
    let list = list_scores(&reduced, k_hat.max(1), &cfg, prevalence, &noise, &law)?;
    let best = list.best_log_score();
    let mut ranked: Vec<_> = list.candidates.iter().filter(|c| c.log_score > f64::NEG_INFINITY).collect();
    ranked.sort_by(|a, b| b.log_score.total_cmp(&a.log_score));
    let candidates: Vec<_> = ranked
        .iter()
        .take(MAX_LISTED)
        .map(|c| json!({ "subset": c.subset, "ratio": (c.log_score - best).exp(), "loads": c.argmax_loads }))
        .collect();
    Ok(json!({
        "k_hat": k_hat,
        "survivors": list.survivors,
        "estimate": list.union_at(alpha),
        "scored": list.candidates.len(),
        "budget_exceeded": list.budget_exceeded,
        "candidates": candidates,
    })
    .to_string())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn pool_count(reading: f64, pool_size: usize, prevalence: f64) -> Result<String, JsError> {
    pool_count_json(reading, pool_size, prevalence).map_err(js)
}

#[wasm_bindgen]
pub fn simulate_trial(scheme: &str, k: usize, seed: u32, alpha: f64) -> Result<String, JsError> {
    simulate_trial_json(scheme, k, seed.into(), alpha).map_err(js)
}

#[wasm_bindgen]
pub fn decode(matrix: &str, readings: &str, alpha: f64, k_hat: usize, prevalence: f64) -> Result<String, JsError> {
    decode_json(matrix, readings, alpha, k_hat, prevalence).map_err(js)
}
