//! `pooling`: run pooled-testing experiments, generate and check stage-2
//! designs, and decode single instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_pooling::harness::{best_alpha_cell, run_experiment, write_outputs, ExperimentConfig};
use adaptive_pooling::matrices::{
    construct_kirkman, design_profile, design_seed, load_matrix, profile_sample, save_matrix,
    verify_kirkman, verify_profile, KirkmanParams, WeightProfile, BUILD_SEED, DEFAULT_MAX_ATTEMPTS,
};
use adaptive_pooling::model::{LoadLaw, NoiseModel};
use adaptive_pooling::recovery::{comp, estimate_pool_count, list_scores, DecoderConfig, PoolInstance};
use adaptive_pooling::rng::stream;
use adaptive_pooling::Error;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pooling", version, about = "Two-stage adaptive pooled testing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment grid from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate or verify sensing matrices.
    Matrix {
        #[command(subcommand)]
        command: MatrixCommand,
    },
    /// List-decode one pool from a matrix and its readings.
    Decode(DecodeArgs),
}

#[derive(Subcommand)]
enum MatrixCommand {
    /// Draw a matrix realising a weight profile.
    Gen {
        /// A shipped design size such as `6x31`, or a JSON profile file.
        #[arg(long)]
        profile: String,
        /// Defaults to the seed the shipped design was drawn with.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a matrix against a Kirkman layout or a weight profile.
    Verify {
        /// `m,c`: order and number of parallel classes.
        #[arg(long, value_parser = parse_kirkman, conflicts_with = "profile", required_unless_present = "profile")]
        kirkman: Option<KirkmanParams>,
        /// A shipped design size or a JSON profile file.
        #[arg(long)]
        profile: Option<String>,
        /// Matrix file. With `--kirkman` and no matrix, one is constructed
        /// from `--seed` and checked.
        #[arg(long, required_unless_present = "kirkman")]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = BUILD_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Whitespace-separated readings, one per matrix row.
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Estimated number of positives. Without it, the reading of the first
    /// all-ones row is used to estimate the count.
    #[arg(long)]
    k_hat: Option<usize>,
    /// Prevalence for the count estimate and the subset prior.
    #[arg(long, default_value_t = 0.01)]
    prevalence: f64,
    /// Print every scored candidate as a JSON line before the summary.
    #[arg(long)]
    verbose: bool,
}

fn parse_kirkman(s: &str) -> Result<KirkmanParams, String> {
    let (m, c) = s.split_once(',').ok_or("expected m,c")?;
    let m = m.trim().parse().map_err(|_| format!("bad order {m:?}"))?;
    let c = c.trim().parse().map_err(|_| format!("bad class count {c:?}"))?;
    KirkmanParams::new(m, c).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Parse { .. } | Error::UnsupportedOrder { .. } => 2,
        Error::Io { .. } => 3,
        Error::Construction(_) | Error::BudgetExceeded { .. } | Error::Internal(_) => 4,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// `RxW` names a shipped design; anything else is a JSON profile file.
fn resolve_profile(spec: &str) -> Result<(WeightProfile, Option<u64>), Error> {
    if let Some((r, w)) = spec.split_once('x') {
        if let (Ok(r), Ok(w)) = (r.parse(), w.parse()) {
            return Ok((design_profile(r, w)?, Some(design_seed(r, w))));
        }
    }
    let text = read(Path::new(spec))?;
    let profile = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
    Ok((profile, None))
}

fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::from_json(&read(config)?)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let dir = out
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir".into()))?;
    info!("running {} trials per cell, master seed {}", cfg.trials, cfg.master_seed);
    let result = run_experiment(&cfg, threads)?;
    write_outputs(&result, &cfg, &dir)?;
    for sc in &cfg.scheme_configs {
        for &k in &cfg.k_values {
            if let Some(r) = best_alpha_cell(&result.reports, sc.scheme, k) {
                let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
                let rate = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
                println!(
                    "{:<10} k={:<3} alpha={:<6} m_ave={:>8.2} sens={} spec={}",
                    sc.scheme.label(),
                    k,
                    alpha,
                    r.stats.m_ave,
                    rate(r.stats.sensitivity),
                    rate(r.stats.specificity)
                );
            }
        }
    }
    println!("results written to {}", dir.display());
    Ok(0)
}

fn matrix_gen(profile: &str, seed: Option<u64>, out: &Path) -> Result<u8, Error> {
    let (profile, shipped_seed) = resolve_profile(profile)?;
    let seed = seed.or(shipped_seed).unwrap_or(BUILD_SEED);
    let mat = profile_sample(&profile, profile.rows(), profile.cols(), &mut stream(seed), DEFAULT_MAX_ATTEMPTS)?;
    save_matrix(&mat, out)?;
    println!("wrote {}x{} matrix ({} ones, seed {seed}) to {}", mat.rows(), mat.cols(), mat.total_ones(), out.display());
    Ok(0)
}

fn matrix_verify(
    kirkman: Option<KirkmanParams>,
    profile: Option<String>,
    matrix: Option<PathBuf>,
    seed: u64,
) -> Result<u8, Error> {
    let (ok, violation) = match (kirkman, profile) {
        (Some(params), _) => {
            let mat = match &matrix {
                Some(path) => load_matrix(path)?,
                None => construct_kirkman(params, &mut stream(seed))?,
            };
            let report = verify_kirkman(&mat, params)?;
            (report.ok, report.violation)
        }
        (None, Some(spec)) => {
            let (profile, _) = resolve_profile(&spec)?;
            let path = matrix.ok_or_else(|| Error::Config("--profile needs --matrix".into()))?;
            let report = verify_profile(&load_matrix(path)?, &profile);
            (report.ok, report.violation)
        }
        (None, None) => return Err(Error::Config("pass --kirkman or --profile".into())),
    };
    match violation {
        None => println!("ok"),
        Some(v) => println!("FAILED: {v}"),
    }
    Ok(if ok { 0 } else { 1 })
}

fn decode(args: &DecodeArgs) -> Result<u8, Error> {
    let mat = load_matrix(&args.matrix)?;
    let text = read(&args.measurements)?;
    let readings = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad reading {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let width = mat.cols();
    let instance = PoolInstance::new(mat, readings)?;
    let noise = NoiseModel::tapestry();
    let law = LoadLaw::default();
    let k_hat = match args.k_hat {
        Some(k) => k,
        None => {
            let row = (0..instance.matrix.rows())
                .find(|&i| instance.matrix.row_weights()[i] == width)
                .ok_or_else(|| Error::Config("no all-ones row to estimate the count from; pass --k-hat".into()))?;
            let z = instance.noisy[row];
            if z > 0.0 {
                estimate_pool_count(z, width, args.prevalence, &noise, &law)?
            } else {
                0
            }
        }
    };
    let reduced = comp(&instance);
    let cfg = DecoderConfig { alpha: args.alpha, ..DecoderConfig::default() };
    let summary = if reduced.active_rows.is_empty() {
        json!({"k_hat": k_hat, "survivors": reduced.survivors, "estimate": reduced.survivors, "candidates": 0})
    } else {
        let list = list_scores(&reduced, k_hat.max(1), &cfg, args.prevalence, &noise, &law)?;
        if args.verbose {
            for c in &list.candidates {
                println!("{}", serde_json::to_string(c).map_err(|e| Error::Internal(e.to_string()))?);
            }
        }
        json!({
            "k_hat": k_hat,
            "survivors": list.survivors,
            "best_subset": list.best_subset(),
            "best_log_score": list.best.map(|_| list.best_log_score()),
            "estimate": list.union_at(args.alpha),
            "candidates": list.candidates.len(),
            "enumerated": list.enumerated,
            "pruned": list.pruned,
            "budget_exceeded": list.budget_exceeded,
        })
    };
    println!("{summary}");
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed, threads } => simulate(&config, out, seed, threads),
        Command::Matrix { command: MatrixCommand::Gen { profile, seed, out } } => matrix_gen(&profile, seed, &out),
        Command::Matrix { command: MatrixCommand::Verify { kirkman, profile, matrix, seed } } => {
            matrix_verify(kirkman, profile, matrix, seed)
        }
        Command::Decode(args) => decode(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
