//! Parameters of the spatiotemporal block-sparse Gaussian model.
//!
//! A frame `X` (`M` rows, `L` channels) is split into `g` contiguous row blocks.
//! Block `i` is modelled as `vec(X_i^T) ~ N(0, (gamma_i A_i) kron B)`. Vectorization
//! always stacks rows of `X`, so entry `(row j, channel k)` sits at index `j * L + k`
//! and the channel index varies fastest.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `M * L` accepted by the dense Kronecker routines.
pub const DENSE_KRON_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    sizes: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "block sizes must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(Self { sizes })
    }

    /// Blocks of `block_size` rows; the last block absorbs any remainder.
    pub fn uniform(m: usize, block_size: usize) -> Result<Self> {
        if m == 0 || block_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "uniform partition needs positive sizes, got m = {m}, d = {block_size}"
            )));
        }
        let full = m / block_size;
        let rest = m % block_size;
        let mut sizes = vec![block_size; full];
        match (full, rest) {
            (0, r) => sizes.push(r),
            (_, 0) => {}
            (_, r) => sizes.push(r),
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.sizes.iter().scan(0, |start, &d| {
            let r = *start..*start + d;
            *start += d;
            Some(r)
        })
    }

    pub fn check_total(&self, m: usize) -> Result<()> {
        if self.total() != m {
            return Err(Error::DimensionMismatch(format!(
                "partition covers {} rows, signal has {m}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Learned model state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub gamma: Vec<f64>,
    #[serde(with = "nested::list")]
    pub a_blocks: Vec<DMatrix<f64>>,
    #[serde(with = "nested::matrix")]
    pub b: DMatrix<f64>,
    pub lambda: f64,
}

impl Hyperparameters {
    /// Scale-neutral starting point: `gamma = 1`, `A_i = I`, `B = I`.
    pub fn initial(partition: &BlockPartition, channels: usize, lambda: f64) -> Self {
        Self {
            gamma: vec![1.0; partition.len()],
            a_blocks: partition
                .sizes()
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect(),
            b: DMatrix::identity(channels, channels),
            lambda,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One windowed multichannel segment, `M` samples by `L` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelFrame {
    data: DMatrix<f64>,
}

impl MultichannelFrame {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "frame entry {pos} (column-major) is not finite"
            )));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }
}

/// Block-diagonal `diag(gamma_1 A_1, ..., gamma_g A_g)`.
pub fn assemble_pi(gamma: &[f64], a_blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if gamma.len() != a_blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} block scales for {} correlation blocks",
            gamma.len(),
            a_blocks.len()
        )));
    }
    if let Some(a) = a_blocks.iter().find(|a| !a.is_square()) {
        return Err(Error::DimensionMismatch(format!(
            "correlation block is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let m: usize = a_blocks.iter().map(|a| a.nrows()).sum();
    let mut pi = DMatrix::zeros(m, m);
    let mut start = 0;
    for (&g, a) in gamma.iter().zip(a_blocks) {
        let d = a.nrows();
        pi.view_mut((start, start), (d, d)).copy_from(&(a * g));
        start += d;
    }
    Ok(pi)
}

/// Dense prior covariance `Pi kron B` of `vec(X^T)`; small instances only.
pub fn prior_covariance(pi: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let size = pi.nrows() * b.nrows();
    if size > DENSE_KRON_LIMIT {
        return Err(Error::SizeGuard {
            size,
            limit: DENSE_KRON_LIMIT,
        });
    }
    Ok(pi.kronecker(b))
}

/// Serde adapters storing matrices as row-major nested arrays.
pub(crate) mod nested {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serializer};

    fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn from_rows<E: serde::de::Error>(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, E> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(E::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(rows(m))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
            from_rows(Vec::<Vec<f64>>::deserialize(d)?)
        }
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(ms.iter().map(rows))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            Vec::<Vec<Vec<f64>>>::deserialize(d)?
                .into_iter()
                .map(from_rows::<D::Error>)
                .collect()
        }
    }
}
