//! Reconstruction metrics, spectral checks and the runtime benchmark harness.

use std::time::Instant;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BlockPartition;
use crate::sensing::{compression_ratio, make_dct_dictionary, make_measurement_matrix};
use crate::solver::{recover, RecoveryConfig};
use crate::synth::{gen_block_sparse, SynthSpec};

/// Bins on either side of a peak left out of its noise-floor estimate.
pub const PEAK_EXCLUSION_BINS: usize = 5;

/// Half-width, in bins, of the neighbourhood used for the noise floor.
pub const PEAK_NEIGHBOURHOOD_BINS: usize = 25;

/// `||x_hat - x_true||_F^2 / ||x_true||_F^2`.
pub fn nmse(x_hat: &DMatrix<f64>, x_true: &DMatrix<f64>) -> Result<f64> {
    if x_hat.shape() != x_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?}, reference is {:?}",
            x_hat.shape(),
            x_true.shape()
        )));
    }
    let reference = x_true.norm_squared();
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((x_hat - x_true).norm_squared() / reference)
}

/// One-sided periodogram scaled by `1 / (fs M)`.
///
/// Returns bin frequencies `k fs / M` for `k = 0..=M/2` and the density, so
/// that `sum(psd) * fs / M` equals the mean square of the signal.
pub fn periodogram(signal: &[f64], fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = signal.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "periodogram needs >= 2 samples, got {m}"
        )));
    }
    if fs <= 0.0 {
        return Err(Error::InvalidArgument(
            "sampling rate must be positive".into(),
        ));
    }
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let scale = 1.0 / (fs * m as f64);
    let psd = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let mirrored = k != 0 && !(m.is_multiple_of(2) && k == half);
            if mirrored {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    let freqs = (0..=half).map(|k| k as f64 * fs / m as f64).collect();
    Ok((freqs, psd))
}

/// Periodograms of every column, averaged bin by bin.
pub fn average_psd(x: &DMatrix<f64>, fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut freqs = Vec::new();
    let mut acc: Vec<f64> = Vec::new();
    for col in x.column_iter() {
        let samples: Vec<f64> = col.iter().copied().collect();
        let (f, p) = periodogram(&samples, fs)?;
        if acc.is_empty() {
            acc = vec![0.0; p.len()];
            freqs = f;
        }
        acc.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
    }
    let l = x.ncols().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= l);
    Ok((freqs, acc))
}

/// Bin nearest to `freq` for an `m`-sample periodogram at `fs`.
pub fn nearest_bin(freq: f64, fs: f64, m: usize) -> usize {
    (freq * m as f64 / fs).round() as usize
}

/// Peak height over the local noise floor, in dB.
///
/// The floor is the median density over bins within
/// [`PEAK_NEIGHBOURHOOD_BINS`] of `bin`, leaving out the [`PEAK_EXCLUSION_BINS`]
/// closest on each side.
pub fn peak_prominence_db(psd: &[f64], bin: usize) -> Result<f64> {
    if bin >= psd.len() {
        return Err(Error::InvalidArgument(format!(
            "bin {bin} beyond {} bins",
            psd.len()
        )));
    }
    let lo = bin.saturating_sub(PEAK_NEIGHBOURHOOD_BINS);
    let hi = (bin + PEAK_NEIGHBOURHOOD_BINS).min(psd.len() - 1);
    let mut floor: Vec<f64> = (lo..=hi)
        .filter(|&k| k.abs_diff(bin) > PEAK_EXCLUSION_BINS)
        .map(|k| psd[k])
        .collect();
    if floor.is_empty() {
        return Err(Error::InvalidArgument(
            "empty noise-floor neighbourhood".into(),
        ));
    }
    let median = median(&mut floor);
    if median <= 0.0 || psd[bin] <= 0.0 {
        return Err(Error::InvalidArgument(
            "non-positive density in prominence".into(),
        ));
    }
    Ok(10.0 * (psd[bin] / median).log10())
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "pearson needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("zero-variance input".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Median; averages the two middle values for even lengths. Reorders `values`.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One benchmark cell: medians over its trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub cr: f64,
    pub seed: u64,
    pub nmse: f64,
    pub wall_time_seconds: f64,
    pub iters: usize,
}

pub const BENCH_CSV_HEADER: &str = "m,n,l,cr,seed,nmse,wall_time_seconds,iters";

pub fn records_to_csv(records: &[BenchRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Synthetic workload shared by the benchmark sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub block_size: usize,
    pub active_blocks: usize,
    pub r_intra: f64,
    pub rho_inter: f64,
    pub use_dictionary: bool,
    pub recovery: RecoveryConfig,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            block_size: 16,
            active_blocks: 3,
            r_intra: 0.9,
            rho_inter: 0.9,
            use_dictionary: false,
            recovery: RecoveryConfig::default(),
        }
    }
}

struct Trial {
    nmse: f64,
    seconds: f64,
    iters: usize,
}

fn run_trial(m: usize, n: usize, l: usize, seed: u64, settings: &BenchSettings) -> Result<Trial> {
    let partition = BlockPartition::uniform(m, settings.block_size)?;
    let spec = SynthSpec {
        active_count: settings.active_blocks.min(partition.len()),
        partition,
        r_intra: settings.r_intra,
        rho_inter: settings.rho_inter,
        channels: l,
        seed,
    };
    let (x_true, _) = gen_block_sparse(&spec)?;
    let phi = make_measurement_matrix(n, m, seed.wrapping_add(1_000_003))?;
    let dict = if settings.use_dictionary {
        Some(make_dct_dictionary(m)?)
    } else {
        None
    };
    let y = phi.apply(&x_true)?;
    let start = Instant::now();
    let result = recover(&y, &phi, dict.as_ref(), &settings.recovery)?;
    let seconds = start.elapsed().as_secs_f64().max(1e-9);
    Ok(Trial {
        nmse: nmse(&result.x_hat, &x_true)?,
        seconds,
        iters: result.iters,
    })
}

fn summarize(m: usize, n: usize, l: usize, seed: u64, trials: Vec<Trial>) -> Result<BenchRecord> {
    let mut errs: Vec<f64> = trials.iter().map(|t| t.nmse).collect();
    let mut times: Vec<f64> = trials.iter().map(|t| t.seconds).collect();
    let mut iters: Vec<usize> = trials.iter().map(|t| t.iters).collect();
    iters.sort_unstable();
    Ok(BenchRecord {
        m,
        n,
        l,
        cr: compression_ratio(n, m)?,
        seed,
        nmse: median(&mut errs),
        wall_time_seconds: median(&mut times),
        iters: iters[(iters.len() - 1) / 2],
    })
}

fn run_cell(
    m: usize,
    n: usize,
    l: usize,
    trials: usize,
    seed: u64,
    settings: &BenchSettings,
) -> Result<BenchRecord> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial required".into()));
    }
    let results = (0..trials as u64)
        .map(|t| run_trial(m, n, l, seed.wrapping_add(t), settings))
        .collect::<Result<Vec<_>>>()?;
    summarize(m, n, l, seed, results)
}

/// Median recovery time and error per channel count at fixed `(m, n)`.
///
/// Trial `t` uses seed `seed + t` for every channel count, so cells differ only
/// in `L`. Runs sequentially.
pub fn bench_channels(
    m: usize,
    n: usize,
    channel_counts: &[usize],
    trials: usize,
    seed: u64,
    settings: &BenchSettings,
) -> Result<Vec<BenchRecord>> {
    channel_counts
        .iter()
        .map(|&l| run_cell(m, n, l, trials, seed, settings))
        .collect()
}

/// Median recovery error and time per compression ratio at fixed `(m, l)`.
pub fn bench_compression(
    m: usize,
    ratios: &[f64],
    l: usize,
    trials: usize,
    seed: u64,
    settings: &BenchSettings,
) -> Result<Vec<BenchRecord>> {
    ratios
        .iter()
        .map(|&cr| {
            let n = crate::sensing::rows_for_ratio(m, cr)?;
            run_cell(m, n, l, trials, seed, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn nmse_cases() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse(&DMatrix::zeros(2, 2), &x).unwrap(), 1.0);
        assert_eq!(nmse(&(&x * 2.0), &x).unwrap(), 1.0);
        assert!(matches!(
            nmse(&x, &DMatrix::zeros(2, 2)),
            Err(Error::ZeroReference)
        ));
        assert!(nmse(&DMatrix::zeros(1, 2), &x).is_err());
    }

    #[test]
    fn constant_signal_is_all_dc() {
        let (_, psd) = periodogram(&[3.0; 64], 64.0).unwrap();
        assert!(psd[0] > 0.0);
        assert!(psd[1..].iter().all(|p| *p < 1e-20));
        assert!(periodogram(&[1.0], 1.0).is_err());
    }

    #[test]
    fn exact_bin_sinusoid_single_bin() {
        let m = 128;
        let sig: Vec<f64> = (0..m)
            .map(|n| (2.0 * PI * 8.0 * n as f64 / m as f64).sin())
            .collect();
        let (freqs, psd) = periodogram(&sig, m as f64).unwrap();
        let total: f64 = psd.iter().sum();
        assert!((psd[8] / total - 1.0).abs() < 1e-12);
        assert_eq!(freqs[8], 8.0);
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &m in &[16usize, 256, 1000, 17] {
            let sig: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fs = 250.0;
            let (_, psd) = periodogram(&sig, fs).unwrap();
            let spectral = psd.iter().sum::<f64>() * fs / m as f64;
            let temporal = sig.iter().map(|v| v * v).sum::<f64>() / m as f64;
            assert!((spectral - temporal).abs() < 1e-8 * temporal, "m = {m}");
        }
    }

    #[test]
    fn pearson_cases() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        let u = [1.0, -1.0, 1.0, -1.0];
        let v = [1.0, 1.0, -1.0, -1.0];
        assert!(pearson(&u, &v).unwrap().abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn prominence_of_isolated_peak() {
        let mut psd = vec![1.0; 129];
        psd[10] = 100.0;
        assert!((peak_prominence_db(&psd, 10).unwrap() - 20.0).abs() < 1e-12);
        assert!(peak_prominence_db(&psd, 200).is_err());
    }

    #[test]
    fn single_trial_single_record() {
        let settings = BenchSettings {
            block_size: 4,
            active_blocks: 1,
            recovery: RecoveryConfig {
                max_iters: 3,
                ..RecoveryConfig::default()
            },
            ..BenchSettings::default()
        };
        let recs = bench_channels(16, 8, &[1], 1, 3, &settings).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].l, 1);
        assert!(recs[0].wall_time_seconds > 0.0);
        let again = bench_channels(16, 8, &[1], 1, 3, &settings).unwrap();
        assert_eq!(recs[0].nmse, again[0].nmse);
        let csv = records_to_csv(&recs).unwrap();
        assert_eq!(csv.lines().next().unwrap(), BENCH_CSV_HEADER);
        assert_eq!(csv.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            seed in any::<u64>(),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let moved: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            let r0 = pearson(&a, &b).unwrap();
            let r1 = pearson(&moved, &b).unwrap();
            prop_assert!((r0 - r1).abs() < 1e-12);
        }
    }
}
