//! Compressed sensing of multichannel signal frames with spatiotemporal sparse
//! Bayesian learning.
//!
//! Frames are compressed with a sparse binary measurement matrix
//! ([`sensing`]) and recovered by an EM loop ([`solver`]) that learns block
//! scales, intra-block (temporal) correlation and inter-channel (spatial)
//! correlation jointly. [`synth`] generates ground truth and dense reference
//! posteriors, and [`eval`] holds the metrics and timing harness.

pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod model;
pub mod sensing;
pub mod solver;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use model::{BlockPartition, Hyperparameters, MultichannelFrame};
pub use sensing::{
    compress, compression_ratio, make_dct_dictionary, make_measurement_matrix, CompressedFrame,
    Dictionary, SparseBinaryMatrix,
};
pub use solver::{recover, recover_stream, RecoveryConfig, RecoveryResult};

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;
    use rand::Rng;

    pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Well-conditioned SPD matrix: `G G^T / n + I`.
    pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
        let g = random_matrix(rng, n, n);
        let mut s = &g * g.transpose() / n as f64;
        for i in 0..n {
            s[(i, i)] += 1.0;
        }
        s
    }
}
