//! The alternating EM recovery loop.
//!
//! Each iteration whitens the data with the current `B`, computes the shared
//! posterior, updates `gamma`, the raw `A_i` (then their AR(1) regularization)
//! and, in noisy mode, `lambda`. It then maps the posterior mean back to the
//! original domain and re-estimates `B` from it. With a dictionary the loop
//! runs on the coefficients `Z` against `Omega = Phi D` and returns `X = D Z`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::model::{assemble_pi, BlockPartition, Hyperparameters};
use crate::sensing::{Dictionary, SparseBinaryMatrix};
use crate::spatial::{
    posterior, spatial_whiten, unwhiten, update_a_raw, update_gamma, update_lambda,
    update_lambda_low_snr,
};
use crate::temporal::{regularize_a, update_b, NoiseTerm};

/// How the rows are cut into blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSpec {
    /// Equal blocks, the last one absorbing any remainder.
    Uniform(usize),
    Explicit(BlockPartition),
}

impl PartitionSpec {
    pub fn resolve(&self, m: usize) -> Result<BlockPartition> {
        match self {
            PartitionSpec::Uniform(d) => BlockPartition::uniform(m, *d),
            PartitionSpec::Explicit(p) => {
                p.check_total(m)?;
                Ok(p.clone())
            }
        }
    }
}

/// Regularizer added to the inter-channel update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    /// `lambda + 1e-6` in noisy mode, none when noiseless.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub partition: PartitionSpec,
    /// Hold `lambda` at `lambda_fixed` and drop the residual term of the `B` update.
    pub noiseless: bool,
    pub lambda_fixed: f64,
    pub max_iters: usize,
    /// Stop once no entry of the signal estimate moves by this much between iterations.
    pub tol: f64,
    /// Block scales strictly below this are zeroed for good. Zero disables pruning.
    pub prune_threshold: f64,
    /// Use the block-diagonal trace in the noise update.
    pub low_snr: bool,
    pub eta: EtaMode,
    /// Learn the inter-channel correlation; when false `B` stays at identity.
    pub learn_b: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            partition: PartitionSpec::Uniform(16),
            noiseless: true,
            lambda_fixed: 1e-10,
            max_iters: 40,
            tol: 1e-6,
            prune_threshold: 0.0,
            low_snr: true,
            eta: EtaMode::Auto,
            learn_b: true,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.prune_threshold.is_nan() || self.prune_threshold < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "prune_threshold must be non-negative, got {}",
                self.prune_threshold
            )));
        }
        if self.lambda_fixed.is_nan() || self.lambda_fixed <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_fixed must be positive, got {}",
                self.lambda_fixed
            )));
        }
        if let EtaMode::Fixed(eta) = self.eta {
            if eta.is_nan() || eta < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "eta must be non-negative, got {eta}"
                )));
            }
        }
        if let PartitionSpec::Uniform(0) = self.partition {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        Ok(())
    }

    fn eta(&self, lambda: f64) -> f64 {
        match self.eta {
            EtaMode::Fixed(v) => v,
            EtaMode::Auto if self.noiseless => 0.0,
            EtaMode::Auto => lambda + 1e-6,
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    pub r: f64,
    pub gamma: Vec<f64>,
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: DMatrix<f64>,
    /// Coefficients in the dictionary domain; equal to `x_hat` without a dictionary.
    pub z_hat: DMatrix<f64>,
    pub hyper: Hyperparameters,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

/// Column variance averaged over channels.
fn mean_column_variance(y: &DMatrix<f64>) -> f64 {
    let n = y.nrows() as f64;
    if y.nrows() < 2 {
        return 0.0;
    }
    y.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum::<f64>()
        / y.ncols() as f64
}

/// Recovers an `M x L` frame from its compressed measurements `y`.
pub fn recover(
    y: &DMatrix<f64>,
    phi: &SparseBinaryMatrix,
    dict: Option<&Dictionary>,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    let (n, m) = (phi.rows(), phi.cols());
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "measurements have {} rows, matrix has {n}",
            y.nrows()
        )));
    }
    let l = y.ncols();
    if l == 0 {
        return Err(Error::InvalidArgument("no channels".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "measurements contain non-finite values".into(),
        ));
    }
    let partition = config.partition.resolve(m)?;
    let omega = match dict {
        Some(d) if d.size() != m => {
            return Err(Error::DimensionMismatch(format!(
                "dictionary of size {} for {m} columns",
                d.size()
            )))
        }
        Some(d) => phi.to_dense() * d.basis(),
        None => phi.to_dense(),
    };

    let lambda0 = if config.noiseless {
        config.lambda_fixed
    } else {
        (1e-2 * mean_column_variance(y)).max(config.lambda_fixed)
    };
    let mut hyper = Hyperparameters::initial(&partition, l, lambda0);
    let mut estimate = DMatrix::zeros(m, l);
    let mut x_hat = DMatrix::zeros(m, l);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    for it in 1..=config.max_iters {
        let y_w = spatial_whiten(y, &hyper.b)?;
        let pi = assemble_pi(&hyper.gamma, &hyper.a_blocks)?;
        let post = posterior(&y_w, &omega, &pi, hyper.lambda)?;

        let mut gamma = update_gamma(&post, &hyper.a_blocks, &partition)?;
        if config.prune_threshold > 0.0 {
            gamma
                .iter_mut()
                .filter(|g| **g < config.prune_threshold)
                .for_each(|g| *g = 0.0);
        }
        let a_raw = update_a_raw(&post, &gamma, &partition, &hyper.a_blocks)?;
        let (r, a_blocks) = regularize_a(&a_raw)?;
        let lambda = if config.noiseless {
            hyper.lambda
        } else if config.low_snr {
            update_lambda_low_snr(&y_w, &omega, &post, &partition)?.max(config.lambda_fixed)
        } else {
            update_lambda(&y_w, &omega, &post)?.max(config.lambda_fixed)
        };

        let next = unwhiten(&post.mu, &hyper.b)?;
        if next.iter().any(|v| !v.is_finite())
            || gamma.iter().any(|g| !g.is_finite())
            || !lambda.is_finite()
        {
            return Err(Error::NonFinite(it));
        }
        let next_x = match dict {
            Some(d) => d.synthesize(&next),
            None => next.clone(),
        };
        let max_delta = max_abs(&(&next_x - &x_hat));
        hyper.gamma = gamma;
        hyper.a_blocks = a_blocks;
        hyper.lambda = lambda;
        estimate = next;
        x_hat = next_x;
        iters = it;
        log::debug!(
            "iter {it}: max delta {max_delta:e}, r {:.4}, lambda {lambda:e}",
            r.value()
        );
        trace.push(IterationRecord {
            iter: it,
            lambda,
            r: r.value(),
            gamma: hyper.gamma.clone(),
            max_delta,
        });

        if max_delta < config.tol {
            converged = true;
            break;
        }
        if it == config.max_iters {
            break;
        }
        if config.learn_b {
            let noise = (!config.noiseless).then_some(NoiseTerm {
                y,
                phi: &omega,
                lambda,
            });
            hyper.b = update_b(
                &estimate,
                &hyper.a_blocks,
                &hyper.gamma,
                &partition,
                noise,
                config.eta(lambda),
            )?;
        }
    }
    log::info!("recovered {m}x{l} frame in {iters} iterations (converged: {converged})");

    Ok(RecoveryResult {
        x_hat,
        z_hat: estimate,
        hyper,
        iters,
        converged,
        trace,
    })
}

/// Recovers each frame independently, in order; a failing frame does not stop the rest.
pub fn recover_stream(
    frames: &[DMatrix<f64>],
    phi: &SparseBinaryMatrix,
    dict: Option<&Dictionary>,
    config: &RecoveryConfig,
) -> Vec<Result<RecoveryResult>> {
    let shape = frames.first().map(|f| f.shape());
    frames
        .iter()
        .map(|frame| {
            if Some(frame.shape()) != shape {
                return Err(Error::DimensionMismatch(format!(
                    "frame shape {:?} differs from stream shape {:?}",
                    frame.shape(),
                    shape.unwrap_or_default()
                )));
            }
            recover(frame, phi, dict, config)
        })
        .collect()
}
