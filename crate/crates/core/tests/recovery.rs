//! End-to-end recovery on synthetic block-sparse data.

use nalgebra::DMatrix;
use stsbl::eval::{median, nmse};
use stsbl::sensing::make_measurement_matrix;
use stsbl::solver::PartitionSpec;
use stsbl::synth::{gen_block_sparse, SynthSpec};
use stsbl::{recover, BlockPartition, RecoveryConfig, RecoveryResult, SparseBinaryMatrix};

fn spec(m: usize, d: usize, active: usize, rho_inter: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        partition: BlockPartition::uniform(m, d).unwrap(),
        active_count: active,
        r_intra: 0.9,
        rho_inter,
        channels: 4,
        seed,
    }
}

fn run(spec: &SynthSpec, n: usize, config: &RecoveryConfig) -> (f64, Vec<usize>, RecoveryResult) {
    let (x, support) = gen_block_sparse(spec).unwrap();
    let m = spec.partition.total();
    let phi = make_measurement_matrix(n, m, spec.seed + 500).unwrap();
    let res = recover(&phi.apply(&x).unwrap(), &phi, None, config).unwrap();
    (nmse(&res.x_hat, &x).unwrap(), support, res)
}

/// Rank of the measurement columns covering the true support.
fn support_rank(phi: &SparseBinaryMatrix, support: &[usize], d: usize) -> usize {
    let dense = phi.to_dense();
    let cols: Vec<usize> = support.iter().flat_map(|&b| b * d..(b + 1) * d).collect();
    DMatrix::from_fn(phi.rows(), cols.len(), |i, j| dense[(i, cols[j])]).rank(1e-9)
}

fn small_cases() -> Vec<(f64, bool)> {
    let config = RecoveryConfig {
        partition: PartitionSpec::Uniform(8),
        ..RecoveryConfig::default()
    };
    (0..20)
        .map(|seed| {
            let s = spec(64, 8, 2, 0.9, seed);
            let (err, support, _) = run(&s, 32, &config);
            let phi = make_measurement_matrix(32, 64, seed + 500).unwrap();
            (err, support_rank(&phi, &support, 8) == 16)
        })
        .collect()
}

#[test]
fn small_block_sparse_frames_are_recovered() {
    let cases = small_cases();
    let good = cases.iter().filter(|(e, _)| *e < 1e-2).count();
    assert!(
        good >= 18,
        "{good}/20 seeds below 1e-2; (nmse, support identifiable): {cases:?}"
    );
}

#[test]
fn identifiable_supports_are_recovered_exactly() {
    for (err, identifiable) in small_cases() {
        if identifiable {
            assert!(err < 1e-6, "{err:e}");
        }
    }
}

#[test]
fn inactive_blocks_shrink() {
    let config = RecoveryConfig::default();
    for seed in 0..5 {
        let (_, support, res) = run(&spec(256, 16, 3, 0.9, seed), 128, &config);
        let gamma = &res.hyper.gamma;
        let mut active: Vec<f64> = support.iter().map(|&i| gamma[i]).collect();
        let med = median(&mut active);
        let worst_inactive = (0..gamma.len())
            .filter(|i| !support.contains(i))
            .map(|i| gamma[i])
            .fold(0.0, f64::max);
        assert!(
            worst_inactive * 10.0 <= med,
            "seed {seed}: {worst_inactive:e} vs {med:e}"
        );
    }
}

// Paired seeds at a compression ratio where recovery is not exact.
#[test]
fn learning_channel_correlation_does_not_hurt() {
    let learned = RecoveryConfig::default();
    let frozen = RecoveryConfig {
        learn_b: false,
        ..RecoveryConfig::default()
    };
    let mut with_b = Vec::new();
    let mut without_b = Vec::new();
    for seed in 0..20 {
        let s = spec(256, 16, 3, 0.95, seed);
        with_b.push(run(&s, 51, &learned).0);
        without_b.push(run(&s, 51, &frozen).0);
    }
    let wins = with_b.iter().zip(&without_b).filter(|(a, b)| a < b).count();
    // At least 15 of 20 is the one-sided 5% level of the sign test.
    assert!(wins >= 15, "learned B better on {wins}/20 seeds");
    assert!(median(&mut with_b) <= median(&mut without_b));
}

#[test]
fn noisy_mode_tracks_noise_level() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let s = spec(128, 16, 2, 0.9, 3);
    let (x, _) = gen_block_sparse(&s).unwrap();
    let phi = make_measurement_matrix(96, 128, 4).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut y = phi.apply(&x).unwrap();
    y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    let config = RecoveryConfig {
        noiseless: false,
        max_iters: 60,
        ..RecoveryConfig::default()
    };
    let res = recover(&y, &phi, None, &config).unwrap();
    assert!(nmse(&res.x_hat, &x).unwrap() < 0.1);
    assert!(res.hyper.lambda > config.lambda_fixed);
}
