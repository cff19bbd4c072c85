//! Learning in the spatially whitened model.
//!
//! With `B` held fixed, right-multiplying by `B^{-1/2}` decorrelates the
//! channels. Every whitened column then shares one Gaussian posterior
//! covariance `Sigma`, and the block scales, intra-block correlations and
//! noise level follow from closed-form EM updates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_solve, symmetric_power, symmetrize};
use crate::model::BlockPartition;

/// Block scales at or below this value are treated as switched off.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Posterior of the whitened coefficients: one mean column per channel, shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// `Y * B^{-1/2}` using the symmetric inverse square root.
pub fn spatial_whiten(y: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_channels(y, b)?;
    Ok(y * symmetric_power(b, -0.5)?)
}

/// Undo the whitening: `X = X_w * B^{1/2}`.
pub fn unwhiten(x_w: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_channels(x_w, b)?;
    Ok(x_w * symmetric_power(b, 0.5)?)
}

fn check_channels(y: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != y.ncols() || !b.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{} channels but correlation matrix is {}x{}",
            y.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

fn check_shapes(y_w: &DMatrix<f64>, phi: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<()> {
    if y_w.nrows() != phi.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, sensing matrix has {}",
            y_w.nrows(),
            phi.nrows()
        )));
    }
    if pi.nrows() != phi.ncols() || !pi.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "prior is {}x{}, sensing matrix has {} columns",
            pi.nrows(),
            pi.ncols(),
            phi.ncols()
        )));
    }
    Ok(())
}

/// Gaussian posterior of the whitened model.
///
/// `mu = Pi Phi^T (lambda I + Phi Pi Phi^T)^{-1} Y_w` and
/// `Sigma = Pi - Pi Phi^T (lambda I + Phi Pi Phi^T)^{-1} Phi Pi`.
/// Only `Pi` is needed, so blocks switched off by `gamma_i = 0` are fine.
pub fn posterior(
    y_w: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    lambda: f64,
) -> Result<Posterior> {
    check_shapes(y_w, phi, pi)?;
    let phi_pi = phi * pi;
    let mut s = &phi_pi * phi.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += lambda;
    }
    symmetrize(&mut s);
    // gain^T = S^{-1} Phi Pi
    let gain_t = spd_solve(&s, &phi_pi)?;
    let mu = gain_t.tr_mul(y_w);
    let mut sigma = pi - phi_pi.tr_mul(&gain_t);
    symmetrize(&mut sigma);
    Ok(Posterior { mu, sigma })
}

/// Posterior covariance in information form, `(Pi^{-1} + Phi^T Phi / lambda)^{-1}`.
///
/// Requires an invertible prior and `lambda > 0`.
pub fn sigma_information_form(
    phi: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if pi.nrows() != phi.ncols() {
        return Err(Error::DimensionMismatch("prior vs sensing columns".into()));
    }
    let info = spd_inverse(pi)? + phi.tr_mul(phi) / lambda;
    spd_inverse(&info)
}

/// MAP estimate in the original (unwhitened) domain: `mu * B^{1/2}`.
pub fn map_estimate(
    y_w: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    lambda: f64,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let post = posterior(y_w, phi, pi, lambda)?;
    unwhiten(&post.mu, b)
}

fn check_partition(post: &Posterior, partition: &BlockPartition) -> Result<()> {
    partition.check_total(post.mu.nrows())?;
    if post.sigma.nrows() != post.mu.nrows() {
        return Err(Error::DimensionMismatch(
            "posterior mean vs covariance".into(),
        ));
    }
    Ok(())
}

// Sum over channels of (Sigma_[i] + mu_[i]l mu_[i]l^T).
fn second_moment(post: &Posterior, range: std::ops::Range<usize>) -> DMatrix<f64> {
    let d = range.len();
    let l = post.mu.ncols() as f64;
    let mu_i = post.mu.rows(range.start, d);
    let mut acc = post.sigma.view((range.start, range.start), (d, d)) * l;
    acc.gemm(1.0, &mu_i, &mu_i.transpose(), 1.0);
    acc
}

/// EM update of the block scales.
///
/// `gamma_i = 1/(L d_i) * sum_l Tr[A_i^{-1} (Sigma_[i] + mu_[i]l mu_[i]l^T)]`.
pub fn update_gamma(
    post: &Posterior,
    a_blocks: &[DMatrix<f64>],
    partition: &BlockPartition,
) -> Result<Vec<f64>> {
    check_partition(post, partition)?;
    if a_blocks.len() != partition.len() {
        return Err(Error::DimensionMismatch(
            "correlation blocks vs partition".into(),
        ));
    }
    let l = post.mu.ncols() as f64;
    partition
        .ranges()
        .zip(a_blocks)
        .map(|(range, a)| {
            let d = range.len();
            if a.nrows() != d {
                return Err(Error::DimensionMismatch(format!(
                    "block of {d} rows with {}x{} correlation",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let a_inv = a.clone().cholesky().ok_or(Error::Singular)?.inverse();
            let moment = second_moment(post, range);
            let trace = a_inv.component_mul(&moment).sum();
            Ok((trace / (l * d as f64)).max(0.0))
        })
        .collect()
}

/// Raw EM update of the intra-block correlations, before regularization.
///
/// `A_i = 1/L * sum_l (Sigma_[i] + mu_[i]l mu_[i]l^T) / gamma_i`. Blocks with
/// `gamma_i <= GAMMA_FLOOR` keep their entry from `previous`.
pub fn update_a_raw(
    post: &Posterior,
    gamma: &[f64],
    partition: &BlockPartition,
    previous: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    check_partition(post, partition)?;
    if gamma.len() != partition.len() || previous.len() != partition.len() {
        return Err(Error::DimensionMismatch("block scales vs partition".into()));
    }
    let l = post.mu.ncols() as f64;
    Ok(partition
        .ranges()
        .zip(gamma)
        .zip(previous)
        .map(|((range, &g), prev)| {
            if g <= GAMMA_FLOOR {
                return prev.clone();
            }
            let mut a = second_moment(post, range) / (l * g);
            symmetrize(&mut a);
            a
        })
        .collect())
}

fn residual_term(y_w: &DMatrix<f64>, phi: &DMatrix<f64>, post: &Posterior) -> Result<f64> {
    if y_w.nrows() != phi.nrows() || phi.ncols() != post.mu.nrows() {
        return Err(Error::DimensionMismatch("noise update shapes".into()));
    }
    let resid = y_w - phi * &post.mu;
    Ok(resid.norm_squared() / (y_w.nrows() * y_w.ncols()) as f64)
}

/// Noise update `||Y_w - Phi mu||_F^2 / (N L) + Tr(Sigma Phi^T Phi) / N`.
pub fn update_lambda(y_w: &DMatrix<f64>, phi: &DMatrix<f64>, post: &Posterior) -> Result<f64> {
    let n = phi.nrows() as f64;
    let fit = residual_term(y_w, phi, post)?;
    // Tr(Sigma Phi^T Phi) = sum((Phi Sigma) .* Phi)
    let spread = (phi * &post.sigma).component_mul(phi).sum();
    Ok(fit + spread / n)
}

/// Low-SNR noise update: the trace only keeps the diagonal blocks of `Sigma`.
pub fn update_lambda_low_snr(
    y_w: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    post: &Posterior,
    partition: &BlockPartition,
) -> Result<f64> {
    check_partition(post, partition)?;
    let n = phi.nrows() as f64;
    let fit = residual_term(y_w, phi, post)?;
    let spread: f64 = partition
        .ranges()
        .map(|r| {
            let d = r.len();
            let phi_i = phi.columns(r.start, d);
            let sigma_i = post.sigma.view((r.start, r.start), (d, d));
            (phi_i * sigma_i).component_mul(&phi_i).sum()
        })
        .sum();
    Ok(fit + spread / n)
}
