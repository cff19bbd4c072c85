//! Layered experiment settings: command-line flags over a JSON file over defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use stsbl::solver::{EtaMode, PartitionSpec};
use stsbl::RecoveryConfig;

/// Optional overrides read from `--config`. Unknown keys are rejected so typos surface.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub l: Option<usize>,
    pub cr: Option<f64>,
    pub seed: Option<u64>,
    pub block_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub noiseless: Option<bool>,
    pub low_snr: Option<bool>,
    pub prune_threshold: Option<f64>,
    pub lambda_fixed: Option<f64>,
    pub eta: Option<f64>,
    pub learn_b: Option<bool>,
    pub no_dict: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Solver flags shared by `recover` and `bench`.
#[derive(Debug, Clone, Default, Args)]
pub struct RecoveryArgs {
    /// Block size of the uniform partition [default: 16]
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Iteration cap [default: 40]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Convergence tolerance on the largest entry change [default: 1e-6]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Hold the noise variance fixed (the default)
    #[arg(long, conflicts_with = "noisy")]
    pub noiseless: bool,
    /// Learn the noise variance
    #[arg(long)]
    pub noisy: bool,
    /// Block-diagonal trace in the noise update (the default)
    #[arg(long, conflicts_with = "no_low_snr")]
    pub low_snr: bool,
    /// Full trace in the noise update
    #[arg(long)]
    pub no_low_snr: bool,
    /// Zero block scales below this value [default: 0, disabled]
    #[arg(long)]
    pub prune_threshold: Option<f64>,
    /// Keep the inter-channel correlation at identity
    #[arg(long)]
    pub no_learn_b: bool,
}

fn pick_flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

pub fn recovery_config(args: &RecoveryArgs, file: &ExperimentConfig) -> Result<RecoveryConfig> {
    let mut cfg = RecoveryConfig::default();
    if let Some(d) = args.block_size.or(file.block_size) {
        cfg.partition = PartitionSpec::Uniform(d);
    }
    if let Some(v) = args.max_iters.or(file.max_iters) {
        cfg.max_iters = v;
    }
    if let Some(v) = args.tol.or(file.tol) {
        cfg.tol = v;
    }
    if let Some(v) = pick_flag(args.noiseless, args.noisy).or(file.noiseless) {
        cfg.noiseless = v;
    }
    if let Some(v) = pick_flag(args.low_snr, args.no_low_snr).or(file.low_snr) {
        cfg.low_snr = v;
    }
    if let Some(v) = args.prune_threshold.or(file.prune_threshold) {
        cfg.prune_threshold = v;
    }
    if let Some(v) = file.lambda_fixed {
        cfg.lambda_fixed = v;
    }
    if let Some(v) = file.eta {
        cfg.eta = EtaMode::Fixed(v);
    }
    if args.no_learn_b {
        cfg.learn_b = false;
    } else if let Some(v) = file.learn_b {
        cfg.learn_b = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First value present among flag and file, or a diagnostic naming the flag.
pub fn required<T: Copy>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    match flag.or(file) {
        Some(v) => Ok(v),
        None => bail!("missing --{name} (flag or config key)"),
    }
}
