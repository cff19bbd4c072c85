//! Ground-truth generators and dense reference posteriors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockPartition, DENSE_KRON_LIMIT};

/// Parameters of a synthetic block-sparse, spatiotemporally correlated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub partition: BlockPartition,
    pub active_count: usize,
    pub r_intra: f64,
    pub rho_inter: f64,
    pub channels: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.active_count > self.partition.len() {
            return Err(Error::InvalidArgument(format!(
                "{} active blocks out of {}",
                self.active_count,
                self.partition.len()
            )));
        }
        if self.channels == 0 {
            return Err(Error::InvalidArgument(
                "at least one channel required".into(),
            ));
        }
        if self.r_intra.abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "intra-block coefficient {} outside (-1, 1)",
                self.r_intra
            )));
        }
        let lower = if self.channels > 1 {
            -1.0 / (self.channels - 1) as f64
        } else {
            -1.0
        };
        if self.rho_inter >= 1.0 || self.rho_inter <= lower {
            return Err(Error::InvalidArgument(format!(
                "inter-channel correlation {} leaves B indefinite for {} channels",
                self.rho_inter, self.channels
            )));
        }
        Ok(())
    }

    /// `(1 - rho) I + rho 1 1^T`.
    pub fn inter_channel_matrix(&self) -> DMatrix<f64> {
        let l = self.channels;
        DMatrix::from_fn(l, l, |i, j| if i == j { 1.0 } else { self.rho_inter })
    }
}

/// `[r^|j-k|]`, the correlation matrix of a unit-variance AR(1) process.
pub fn gen_ar1_toeplitz(d: usize, r: f64) -> Result<DMatrix<f64>> {
    if r.abs() >= 1.0 || !r.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "AR(1) coefficient {r} outside (-1, 1)"
        )));
    }
    Ok(DMatrix::from_fn(d, d, |j, k| r.powi(j.abs_diff(k) as i32)))
}

/// Draws an `M x L` frame whose active blocks follow `N(0, A kron B)`.
///
/// `active_count` blocks are chosen uniformly; every other entry is exactly
/// zero. Returns the frame and the sorted active block indices.
pub fn gen_block_sparse(spec: &SynthSpec) -> Result<(DMatrix<f64>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.partition.len();
    let mut support: Vec<usize> = index::sample(&mut rng, g, spec.active_count).into_vec();
    support.sort_unstable();

    let l = spec.channels;
    let b_factor = spec
        .inter_channel_matrix()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(f64::NAN))?
        .l();
    let ranges: Vec<_> = spec.partition.ranges().collect();
    let mut x = DMatrix::zeros(spec.partition.total(), l);
    for &i in &support {
        let range = ranges[i].clone();
        let d = range.len();
        let a_factor = gen_ar1_toeplitz(d, spec.r_intra)?
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(f64::NAN))?
            .l();
        let white = DMatrix::from_fn(d, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        // vec((F_A G F_B^T)^T) = (F_A kron F_B) vec(G^T)
        let block = a_factor * white * b_factor.transpose();
        x.rows_mut(range.start, d).copy_from(&block);
    }
    Ok((x, support))
}

/// Parameters of a synthetic steady-state evoked response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepSpec {
    pub samples: usize,
    pub channels: usize,
    pub f0: f64,
    pub fs: f64,
    pub harmonic_gain: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Fundamental plus second harmonic with a per-channel random phase, plus white noise.
pub fn gen_ssvep_like(spec: &SsvepSpec) -> Result<DMatrix<f64>> {
    if spec.f0 <= 0.0 || spec.fs <= 0.0 || 2.0 * spec.f0 >= spec.fs / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "harmonic at {} Hz aliases at sampling rate {} Hz",
            2.0 * spec.f0,
            spec.fs
        )));
    }
    if spec.noise_sigma < 0.0 {
        return Err(Error::InvalidArgument(
            "noise sigma must be non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases: Vec<f64> = (0..spec.channels)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let mut x = DMatrix::zeros(spec.samples, spec.channels);
    for (c, &phase) in phases.iter().enumerate() {
        for n in 0..spec.samples {
            let t = n as f64 / spec.fs;
            let w = 2.0 * PI * spec.f0 * t;
            let noise: f64 = rng.sample(StandardNormal);
            x[(n, c)] = (w + phase).sin()
                + spec.harmonic_gain * (2.0 * w + phase).sin()
                + spec.noise_sigma * noise;
        }
    }
    Ok(x)
}

/// Stacks the rows of `x`: entry `(i, k)` lands at `i * ncols + k`.
pub fn vec_rows(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
    )
}

/// Inverse of [`vec_rows`].
pub fn unvec_rows(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, k| v[i * cols + k])
}

/// Dense joint posterior of `vec(X^T)`.
///
/// Prior `N(0, Pi kron B)`, noise `N(0, lambda I kron B)`, observation
/// `vec(Y^T) = (Phi kron I_L) vec(X^T) + vec(V^T)`. Computed in information
/// form with general LU inverses, so it requires a full-support prior.
pub fn brute_force_posterior(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, m, l) = (phi.nrows(), phi.ncols(), b.nrows());
    if y.nrows() != n || y.ncols() != l || pi.nrows() != m || !pi.is_square() || !b.is_square() {
        return Err(Error::DimensionMismatch("dense posterior shapes".into()));
    }
    let size = m * l;
    if size > DENSE_KRON_LIMIT || n * l > DENSE_KRON_LIMIT {
        return Err(Error::SizeGuard {
            size: size.max(n * l),
            limit: DENSE_KRON_LIMIT,
        });
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let prior_prec = pi.kronecker(b).try_inverse().ok_or(Error::Singular)?;
    let b_inv = b.clone().try_inverse().ok_or(Error::Singular)?;
    let noise_prec = DMatrix::<f64>::identity(n, n).kronecker(&b_inv) / lambda;
    let h = phi.kronecker(&DMatrix::<f64>::identity(l, l));
    let ht_noise = h.transpose() * &noise_prec;
    let post_prec = prior_prec + &ht_noise * &h;
    let mut cov = post_prec.try_inverse().ok_or(Error::Singular)?;
    cov = (&cov + cov.transpose()) * 0.5;
    let mean = &cov * (ht_noise * vec_rows(y));
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::periodogram;
    use crate::linalg::frobenius;
    use nalgebra::SymmetricEigen;

    fn spec(sizes: Vec<usize>, k: usize, r: f64, rho: f64, l: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            partition: BlockPartition::new(sizes).unwrap(),
            active_count: k,
            r_intra: r,
            rho_inter: rho,
            channels: l,
            seed,
        }
    }

    #[test]
    fn toeplitz_cases() {
        assert_eq!(gen_ar1_toeplitz(4, 0.0).unwrap(), DMatrix::identity(4, 4));
        let t = gen_ar1_toeplitz(3, 0.5).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(t, expected);
        let strong = gen_ar1_toeplitz(16, 0.99).unwrap();
        assert!(SymmetricEigen::new(strong).eigenvalues.min() > 0.0);
        assert!(gen_ar1_toeplitz(3, 1.0).is_err());
    }

    #[test]
    fn empty_support_is_zero() {
        let (x, support) = gen_block_sparse(&spec(vec![4, 4], 0, 0.5, 0.5, 3, 1)).unwrap();
        assert!(support.is_empty());
        assert_eq!(x, DMatrix::zeros(8, 3));
    }

    #[test]
    fn exactly_k_blocks_active() {
        let s = spec(vec![4; 8], 3, 0.9, 0.9, 2, 5);
        let (x, support) = gen_block_sparse(&s).unwrap();
        assert_eq!(support.len(), 3);
        for (i, r) in s.partition.ranges().enumerate() {
            let nonzero = x.rows(r.start, r.len()).iter().any(|v| *v != 0.0);
            assert_eq!(nonzero, support.contains(&i));
        }
    }

    #[test]
    fn infeasible_correlation_rejected() {
        assert!(gen_block_sparse(&spec(vec![2], 1, 0.0, -0.5, 3, 0)).is_err());
        assert!(gen_block_sparse(&spec(vec![2], 1, 0.0, 1.0, 3, 0)).is_err());
        assert!(gen_block_sparse(&spec(vec![2], 2, 0.0, 0.0, 3, 0)).is_err());
    }

    #[test]
    fn white_case_has_unit_variance() {
        let s = spec(vec![10; 10], 10, 0.0, 0.0, 100, 7);
        let (x, _) = gen_block_sparse(&s).unwrap();
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn active_rows_are_correlated() {
        let mut acc = [0.0f64; 3];
        for trial in 0..10_000u64 {
            let (x, _) = gen_block_sparse(&spec(vec![2], 1, 0.9, 0.9, 2, trial)).unwrap();
            let (a, b) = (x[(0, 0)], x[(1, 0)]);
            acc[0] += a * b;
            acc[1] += a * a;
            acc[2] += b * b;
        }
        let corr = acc[0] / (acc[1] * acc[2]).sqrt();
        assert!((corr - 0.9).abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn block_covariance_converges_to_kronecker() {
        let s0 = spec(vec![2], 1, 0.6, 0.4, 3, 0);
        let truth = gen_ar1_toeplitz(2, 0.6)
            .unwrap()
            .kronecker(&s0.inter_channel_matrix());
        let draws = 100_000u64;
        let mut cov = DMatrix::<f64>::zeros(6, 6);
        for trial in 0..draws {
            let (x, _) = gen_block_sparse(&SynthSpec {
                seed: trial,
                ..s0.clone()
            })
            .unwrap();
            let v = vec_rows(&x);
            cov.ger(1.0, &v, &v, 1.0);
        }
        cov /= draws as f64;
        let rel = frobenius(&(&cov - &truth)) / frobenius(&truth);
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn ssvep_aliasing_rejected() {
        let s = SsvepSpec {
            samples: 64,
            channels: 1,
            f0: 70.0,
            fs: 256.0,
            harmonic_gain: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(gen_ssvep_like(&s).is_err());
    }

    #[test]
    fn pure_sinusoid_peaks_at_fundamental() {
        let s = SsvepSpec {
            samples: 256,
            channels: 3,
            f0: 10.0,
            fs: 256.0,
            harmonic_gain: 0.0,
            noise_sigma: 0.0,
            seed: 4,
        };
        let x = gen_ssvep_like(&s).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            let (freqs, psd) = periodogram(&col, s.fs).unwrap();
            let peak = psd
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(freqs[peak], 10.0);
        }
    }

    #[test]
    fn harmonic_produces_second_peak() {
        let s = SsvepSpec {
            samples: 256,
            channels: 1,
            f0: 10.0,
            fs: 256.0,
            harmonic_gain: 0.5,
            noise_sigma: 0.0,
            seed: 4,
        };
        let col: Vec<f64> = gen_ssvep_like(&s)
            .unwrap()
            .column(0)
            .iter()
            .copied()
            .collect();
        let (_, psd) = periodogram(&col, s.fs).unwrap();
        let mut order: Vec<usize> = (0..psd.len()).collect();
        order.sort_by(|&a, &b| psd[b].total_cmp(&psd[a]));
        let mut top = vec![order[0], order[1]];
        top.sort_unstable();
        assert_eq!(top, vec![10, 20]);
    }

    #[test]
    fn ssvep_power_matches_analytic() {
        let s = SsvepSpec {
            samples: 10_000,
            channels: 4,
            f0: 10.0,
            fs: 256.0,
            harmonic_gain: 0.5,
            noise_sigma: 0.2,
            seed: 9,
        };
        let x = gen_ssvep_like(&s).unwrap();
        let power = x.norm_squared() / x.len() as f64;
        let analytic = 0.5 + 0.5 * 0.25 + 0.04;
        assert!((power - analytic).abs() < 0.1 * analytic, "power {power}");
    }

    #[test]
    fn vec_rows_layout() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = vec_rows(&x);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unvec_rows(&v, 2, 3), x);
    }

    #[test]
    fn brute_force_identity_observation() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, 2.0, -0.3, 0.7]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let (mean, cov) = brute_force_posterior(
            &y,
            &DMatrix::identity(3, 3),
            &DMatrix::identity(3, 3),
            &b,
            1e-10,
        )
        .unwrap();
        assert!((unvec_rows(&mean, 3, 2) - &y).abs().max() < 1e-8);
        assert!(SymmetricEigen::new(cov).eigenvalues.min() > -1e-12);
    }

    #[test]
    fn brute_force_guards() {
        let big = DMatrix::identity(33, 33);
        let b = DMatrix::identity(2, 2);
        assert!(matches!(
            brute_force_posterior(&DMatrix::zeros(33, 2), &big, &big, &b, 0.1),
            Err(Error::SizeGuard { .. })
        ));
        let eye = DMatrix::identity(2, 2);
        assert!(matches!(
            brute_force_posterior(&DMatrix::zeros(2, 2), &eye, &DMatrix::zeros(2, 2), &b, 0.1),
            Err(Error::Singular)
        ));
    }
}
