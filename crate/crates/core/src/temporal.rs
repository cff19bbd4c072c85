//! Learning in the temporally whitened model: the inter-channel correlation
//! update and the AR(1) regularization of the intra-block correlations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, symmetrize};
use crate::model::BlockPartition;
use crate::spatial::GAMMA_FLOOR;

/// Largest magnitude allowed for the shared AR(1) coefficient.
pub const AR_CLIP: f64 = 0.99;

/// Shared AR(1) coefficient of the intra-block correlation model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ArCoefficient(f64);

impl ArCoefficient {
    /// Clips to `[-AR_CLIP, AR_CLIP]`; `sign(0) = 0`.
    pub fn clipped(r: f64) -> Self {
        if r == 0.0 || r.is_nan() {
            return Self(0.0);
        }
        Self(r.signum() * r.abs().min(AR_CLIP))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Residual term of the B update, present only in noisy mode.
#[derive(Debug, Clone, Copy)]
pub struct NoiseTerm<'a> {
    pub y: &'a DMatrix<f64>,
    pub phi: &'a DMatrix<f64>,
    pub lambda: f64,
}

/// Inter-channel correlation update.
///
/// Accumulates `sum_i X_[i]^T A_i^{-1} X_[i] / gamma_i` over blocks with
/// `gamma_i > GAMMA_FLOOR`, adds `(Y - Phi X)^T (Y - Phi X) / lambda` when a
/// noise term is supplied and `eta I` when `eta > 0`, then normalizes to unit
/// Frobenius norm.
pub fn update_b(
    x: &DMatrix<f64>,
    a_blocks: &[DMatrix<f64>],
    gamma: &[f64],
    partition: &BlockPartition,
    noise: Option<NoiseTerm<'_>>,
    eta: f64,
) -> Result<DMatrix<f64>> {
    partition.check_total(x.nrows())?;
    if a_blocks.len() != partition.len() || gamma.len() != partition.len() {
        return Err(Error::DimensionMismatch(
            "B update inputs vs partition".into(),
        ));
    }
    let l = x.ncols();
    let mut acc = DMatrix::zeros(l, l);
    let mut contributed = false;
    for ((range, a), &g) in partition.ranges().zip(a_blocks).zip(gamma) {
        if g <= GAMMA_FLOOR {
            continue;
        }
        let x_i = x.rows(range.start, range.len());
        let chol = a.clone().cholesky().ok_or(Error::Singular)?;
        let whitened = chol.solve(&x_i.into_owned());
        acc.gemm(1.0 / g, &x_i.transpose(), &whitened, 1.0);
        contributed = true;
    }
    if let Some(noise) = noise {
        if noise.lambda <= 0.0 {
            return Err(Error::InvalidArgument("noise term needs lambda > 0".into()));
        }
        let resid = noise.y - noise.phi * x;
        acc.gemm(1.0 / noise.lambda, &resid.transpose(), &resid, 1.0);
        contributed = true;
    }
    if eta > 0.0 {
        for k in 0..l {
            acc[(k, k)] += eta;
        }
        contributed = true;
    }
    let norm = frobenius(&acc);
    if !contributed || norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateCorrelation);
    }
    symmetrize(&mut acc);
    Ok(acc / norm)
}

/// `[r^|j-k|]` of size `d` for the raw coefficient `r` (no clipping, no normalization).
fn toeplitz(d: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |j, k| r.powi(j.abs_diff(k) as i32))
}

/// Lag-one ratio `m1 / m0` of one raw block, clipped; zero for scalar or degenerate blocks.
pub fn block_ratio(a: &DMatrix<f64>) -> ArCoefficient {
    let d = a.nrows();
    if d < 2 {
        return ArCoefficient(0.0);
    }
    let m0 = a.diagonal().mean();
    let m1 = (0..d - 1).map(|j| a[(j + 1, j)]).sum::<f64>() / (d - 1) as f64;
    if m0 == 0.0 || !m0.is_finite() {
        return ArCoefficient(0.0);
    }
    ArCoefficient::clipped(m1 / m0)
}

/// Replaces every raw block by the unit-Frobenius AR(1) Toeplitz matrix built
/// from the average of the per-block lag-one ratios.
pub fn regularize_a(a_raw: &[DMatrix<f64>]) -> Result<(ArCoefficient, Vec<DMatrix<f64>>)> {
    if a_raw.is_empty() {
        return Err(Error::InvalidArgument("no correlation blocks".into()));
    }
    if let Some(a) = a_raw.iter().find(|a| !a.is_square()) {
        return Err(Error::DimensionMismatch(format!(
            "correlation block is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let r = a_raw.iter().map(|a| block_ratio(a).value()).sum::<f64>() / a_raw.len() as f64;
    let r = ArCoefficient::clipped(r);
    let blocks = a_raw
        .iter()
        .map(|a| {
            let t = toeplitz(a.nrows(), r.value());
            let norm = frobenius(&t);
            t / norm
        })
        .collect();
    Ok((r, blocks))
}
