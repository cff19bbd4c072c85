//! Measurement matrices, the DCT dictionary and the compression step.
//!
//! The measurement matrix is binary with exactly two ones per column. It is
//! stored by column as the pair of row indices holding the ones, so applying
//! it costs two additions per column and per channel.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::MultichannelFrame;

/// Whole-matrix redraws attempted before falling back to the spanning construction.
pub const MAX_REDRAWS: usize = 16;

/// An `N x M` binary matrix with exactly two ones per column at distinct rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinaryMatrix {
    rows: usize,
    cols: usize,
    ones: Vec<[usize; 2]>,
}

impl SparseBinaryMatrix {
    /// Builds a matrix from the row-index pairs of each column.
    ///
    /// Fails if a pair repeats a row, an index is out of range, or the result
    /// lacks full row rank.
    pub fn from_column_pairs(rows: usize, ones: Vec<[usize; 2]>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two rows, got {rows}"
            )));
        }
        for (c, pair) in ones.iter().enumerate() {
            if pair[0] == pair[1] || pair[0] >= rows || pair[1] >= rows {
                return Err(Error::InvalidArgument(format!(
                    "column {c} has invalid row pair {pair:?}"
                )));
            }
        }
        let m = Self {
            rows,
            cols: ones.len(),
            ones: ones.into_iter().map(sorted_pair).collect(),
        };
        let rank = m.rank();
        if rank != rows {
            return Err(Error::InvalidArgument(format!(
                "matrix has rank {rank}, expected full row rank {rows}"
            )));
        }
        Ok(m)
    }

    /// Parses a dense 0/1 matrix, checking both structural invariants.
    pub fn from_dense(dense: &DMatrix<f64>) -> Result<Self> {
        let mut ones = Vec::with_capacity(dense.ncols());
        for c in 0..dense.ncols() {
            let mut hits = Vec::with_capacity(2);
            for r in 0..dense.nrows() {
                let v = dense[(r, c)];
                if v == 1.0 {
                    hits.push(r);
                } else if v != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({r}, {c}) = {v} is not binary"
                    )));
                }
            }
            if hits.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "column {c} holds {} ones, expected 2",
                    hits.len()
                )));
            }
            ones.push([hits[0], hits[1]]);
        }
        Self::from_column_pairs(dense.nrows(), ones)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row indices of the two ones in column `c`, ascending.
    pub fn column(&self, c: usize) -> [usize; 2] {
        self.ones[c]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (c, &[a, b]) in self.ones.iter().enumerate() {
            d[(a, c)] = 1.0;
            d[(b, c)] = 1.0;
        }
        d
    }

    /// `Phi * x`, accumulated in ascending column order.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "measurement matrix has {} columns, frame has {} rows",
                self.cols,
                x.nrows()
            )));
        }
        let mut y = DMatrix::zeros(self.rows, x.ncols());
        for l in 0..x.ncols() {
            for (c, &[a, b]) in self.ones.iter().enumerate() {
                let v = x[(c, l)];
                y[(a, l)] += v;
                y[(b, l)] += v;
            }
        }
        Ok(y)
    }

    /// Rank over the reals.
    ///
    /// The matrix is the unsigned incidence matrix of a multigraph on the rows,
    /// one edge per column. Its rank is the row count minus the number of
    /// bipartite connected components (isolated rows included).
    pub fn rank(&self) -> usize {
        let mut adj = vec![Vec::new(); self.rows];
        for &[a, b] in &self.ones {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut color = vec![u8::MAX; self.rows];
        let mut bipartite = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.rows {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            queue.push_back(start);
            let mut odd_cycle = false;
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if color[w] == u8::MAX {
                        color[w] = 1 - color[v];
                        queue.push_back(w);
                    } else if color[w] == color[v] {
                        odd_cycle = true;
                    }
                }
            }
            if !odd_cycle {
                bipartite += 1;
            }
        }
        self.rows - bipartite
    }

    /// Row-major CSV of 0/1 entries without a header.
    pub fn to_csv(&self) -> String {
        let dense = self.to_dense();
        let mut out = String::with_capacity(self.rows * self.cols * 2);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", dense[(r, c)] as u8);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let dense = crate::io::parse_matrix_csv(text)?;
        Self::from_dense(&dense)
    }
}

fn sorted_pair([a, b]: [usize; 2]) -> [usize; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Draws an `n x m` sparse binary measurement matrix of full row rank.
///
/// Every column receives two distinct rows drawn uniformly without replacement.
/// A rank-deficient draw is discarded and the whole matrix redrawn with the
/// next seed, up to [`MAX_REDRAWS`] times. If every redraw is deficient
/// (typical when `m` is close to `n`), the matrix is built from a random
/// spanning subgraph with an odd cycle over `n` randomly placed columns, the
/// remaining columns being drawn uniformly as before.
pub fn make_measurement_matrix(n: usize, m: usize, seed: u64) -> Result<SparseBinaryMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a column cannot hold two distinct ones with n = {n} rows"
        )));
    }
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "full row rank needs n <= m, got n = {n}, m = {m}"
        )));
    }
    if n == 2 {
        // every column is forced to be (1, 1)
        return Err(Error::InvalidArgument(
            "n = 2 admits only rank-one matrices".into(),
        ));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let ones = (0..m).map(|_| draw_pair(&mut rng, n)).collect();
        let phi = SparseBinaryMatrix {
            rows: n,
            cols: m,
            ones,
        };
        if phi.rank() == n {
            return Ok(phi);
        }
    }
    let phi = spanning_draw(n, m, seed.wrapping_add(MAX_REDRAWS as u64));
    if phi.rank() == n {
        log::debug!("measurement matrix {n}x{m}: used spanning construction");
        Ok(phi)
    } else {
        Err(Error::RetryBudgetExhausted(MAX_REDRAWS + 1))
    }
}

fn draw_pair<R: Rng>(rng: &mut R, n: usize) -> [usize; 2] {
    let idx = index::sample(rng, n, 2);
    sorted_pair([idx.index(0), idx.index(1)])
}

// A connected spanning subgraph with exactly one odd cycle has a nonsingular
// incidence matrix, so placing its n edges in random columns guarantees rank n.
fn spanning_draw(n: usize, m: usize, seed: u64) -> SparseBinaryMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut edges: Vec<[usize; 2]> = (0..n - 1).map(|k| [perm[k], perm[k + 1]]).collect();
    if n % 2 == 1 {
        edges.push([perm[n - 1], perm[0]]);
    } else {
        edges.push([perm[n - 1], perm[1]]);
    }
    let mut slots: Vec<usize> = (0..m).collect();
    slots.shuffle(&mut rng);
    let mut ones = vec![[0, 0]; m];
    for (edge, &slot) in edges.into_iter().zip(&slots) {
        ones[slot] = sorted_pair(edge);
    }
    for &slot in &slots[n..] {
        ones[slot] = draw_pair(&mut rng, n);
    }
    SparseBinaryMatrix {
        rows: n,
        cols: m,
        ones,
    }
}

/// Square orthonormal dictionary; signals are synthesized as `basis * z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    basis: DMatrix<f64>,
}

impl Dictionary {
    pub fn size(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Coefficients of `x` in this basis, `basis^T * x`.
    pub fn analyze(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.tr_mul(x)
    }

    pub fn synthesize(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * z
    }
}

/// Orthonormal DCT-II dictionary; column `k` is the `k`-th cosine basis vector.
pub fn make_dct_dictionary(m: usize) -> Result<Dictionary> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "dictionary size must be positive".into(),
        ));
    }
    let mf = m as f64;
    let basis = DMatrix::from_fn(m, m, |n, k| {
        let scale = if k == 0 {
            (1.0 / mf).sqrt()
        } else {
            (2.0 / mf).sqrt()
        };
        scale * (PI * (2 * n + 1) as f64 * k as f64 / (2.0 * mf)).cos()
    });
    Ok(Dictionary { basis })
}

/// Compressed frame `Y = Phi * X` with its compression ratio in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFrame {
    pub data: DMatrix<f64>,
    pub cr: f64,
}

pub fn compress(x: &MultichannelFrame, phi: &SparseBinaryMatrix) -> Result<CompressedFrame> {
    let data = phi.apply(x.data())?;
    let cr = compression_ratio(phi.rows(), phi.cols())?;
    Ok(CompressedFrame { data, cr })
}

/// `(m - n) / m * 100`.
pub fn compression_ratio(n: usize, m: usize) -> Result<f64> {
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!(
            "compression ratio needs 0 < n <= m, got n = {n}, m = {m}"
        )));
    }
    Ok((m - n) as f64 / m as f64 * 100.0)
}

/// Row count giving the requested compression ratio, rounded to the nearest row.
pub fn rows_for_ratio(m: usize, cr: f64) -> Result<usize> {
    if !(0.0..100.0).contains(&cr) {
        return Err(Error::InvalidArgument(format!(
            "compression ratio {cr} outside [0, 100)"
        )));
    }
    let n = (m as f64 * (1.0 - cr / 100.0)).round() as usize;
    Ok(n.clamp(1, m))
}
