//! `stsbl`: generate, compress, recover and benchmark multichannel frames.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand};
use stsbl::eval::{bench_compression, records_to_csv, BenchRecord, BenchSettings};
use stsbl::io::{checkpoints_to_json, matrix_to_csv, parse_matrix_csv, SynthSidecar};
use stsbl::sensing::{compress, make_dct_dictionary, make_measurement_matrix, rows_for_ratio};
use stsbl::synth::{gen_block_sparse, SynthSpec};
use stsbl::{recover, BlockPartition, MultichannelFrame, SparseBinaryMatrix};
use tempfile::NamedTempFile;

use config::{recovery_config, required, ExperimentConfig, RecoveryArgs};

#[derive(Debug, Parser)]
#[command(
    name = "stsbl",
    version,
    about = "Block-sparse multichannel compressed sensing"
)]
struct Cli {
    /// JSON file of defaults; explicit flags take precedence
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random full-rank sensing matrix with two ones per column
    GenMatrix {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Compression ratio in percent, used when --n is absent
        #[arg(long)]
        cr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic block-sparse frame and a JSON sidecar next to it
    Synth {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        block_size: Option<usize>,
        /// Number of nonzero blocks
        #[arg(long, default_value_t = 3)]
        active: usize,
        #[arg(long, default_value_t = 0.9)]
        r_intra: f64,
        #[arg(long, default_value_t = 0.9)]
        rho_inter: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiply a frame by a sensing matrix
    Compress {
        /// Sensing matrix CSV
        #[arg(long)]
        matrix: PathBuf,
        /// Input frame CSV
        #[arg(long)]
        input: PathBuf,
        /// Output frame CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a frame from its measurements
    Recover {
        /// Sensing matrix CSV
        #[arg(long)]
        matrix: PathBuf,
        /// Input frame CSV
        #[arg(long)]
        input: PathBuf,
        /// Output frame CSV
        #[arg(long)]
        out: PathBuf,
        /// Also write per-iteration diagnostics as JSON
        #[arg(long, value_name = "PATH")]
        checkpoints: Option<PathBuf>,
        /// Recover in the sample domain instead of the DCT domain
        #[arg(long)]
        no_dict: bool,
        #[command(flatten)]
        recovery: RecoveryArgs,
    },
    /// Sweep compression ratios and channel counts on synthetic data
    Bench {
        #[arg(long)]
        m: Option<usize>,
        /// Channel counts
        #[arg(long, value_delimiter = ',', default_value = "4")]
        l: Vec<usize>,
        /// Compression ratios in percent
        #[arg(long, value_delimiter = ',', default_value = "50")]
        cr: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        active: usize,
        #[arg(long, default_value_t = 0.9)]
        r_intra: f64,
        #[arg(long, default_value_t = 0.9)]
        rho_inter: f64,
        /// Recover in the DCT domain
        #[arg(long)]
        dict: bool,
        #[command(flatten)]
        recovery: RecoveryArgs,
        /// Record CSV; the plot-ready long table goes to `<stem>.long.csv`
        #[arg(long)]
        out: PathBuf,
    },
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_matrix(path: &Path) -> Result<SparseBinaryMatrix> {
    SparseBinaryMatrix::from_csv(&read_text(path)?)
        .with_context(|| format!("parsing matrix {}", path.display()))
}

fn read_frame(path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    parse_matrix_csv(&read_text(path)?).with_context(|| format!("parsing frame {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Long table with `series,group,x,y` rows: error against ratio and time against channels.
fn long_table(records: &[BenchRecord]) -> String {
    let mut out = String::from("series,group,x,y\n");
    for r in records {
        out.push_str(&format!("nmse_vs_cr,l={},{},{:e}\n", r.l, r.cr, r.nmse));
    }
    for r in records {
        out.push_str(&format!(
            "time_vs_l,cr={},{},{:e}\n",
            r.cr, r.l, r.wall_time_seconds
        ));
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let file = ExperimentConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenMatrix {
            n,
            m,
            cr,
            seed,
            out,
        } => {
            let m = required(m, file.m, "m")?;
            let n = match (n.or(file.n), cr.or(file.cr)) {
                (Some(n), _) => n,
                (None, Some(cr)) => rows_for_ratio(m, cr)?,
                (None, None) => required(None, None, "n")?,
            };
            let phi = make_measurement_matrix(n, m, seed.or(file.seed).unwrap_or(0))?;
            write_atomic(&out, phi.to_csv().as_bytes())?;
            log::info!("wrote {n}x{m} sensing matrix to {}", out.display());
        }
        Command::Synth {
            m,
            l,
            block_size,
            active,
            r_intra,
            rho_inter,
            seed,
            out,
        } => {
            let m = required(m, file.m, "m")?;
            let partition =
                BlockPartition::uniform(m, block_size.or(file.block_size).unwrap_or(16))?;
            let spec = SynthSpec {
                partition,
                active_count: active,
                r_intra,
                rho_inter,
                channels: required(l, file.l, "l")?,
                seed: seed.or(file.seed).unwrap_or(0),
            };
            let (x, support) = gen_block_sparse(&spec)?;
            let sidecar = serde_json::to_string_pretty(&SynthSidecar { spec, support })?;
            write_atomic(&out, matrix_to_csv(&x).as_bytes())?;
            write_atomic(&out.with_extension("json"), sidecar.as_bytes())?;
        }
        Command::Compress { matrix, input, out } => {
            let phi = read_matrix(&matrix)?;
            let frame = MultichannelFrame::new(read_frame(&input)?)?;
            let compressed = compress(&frame, &phi)?;
            log::info!("compressed at ratio {:.2}", compressed.cr);
            write_atomic(&out, matrix_to_csv(&compressed.data).as_bytes())?;
        }
        Command::Recover {
            matrix,
            input,
            out,
            checkpoints,
            no_dict,
            recovery,
        } => {
            let cfg = recovery_config(&recovery, &file)?;
            let phi = read_matrix(&matrix)?;
            let y = read_frame(&input)?;
            ensure!(
                y.nrows() == phi.rows(),
                "measurements have {} rows but the matrix has {}",
                y.nrows(),
                phi.rows()
            );
            let dict = if no_dict || file.no_dict.unwrap_or(false) {
                None
            } else {
                Some(make_dct_dictionary(phi.cols())?)
            };
            let result = recover(&y, &phi, dict.as_ref(), &cfg)?;
            let trace = checkpoints
                .as_ref()
                .map(|_| checkpoints_to_json(&result.trace))
                .transpose()?;
            write_atomic(&out, matrix_to_csv(&result.x_hat).as_bytes())?;
            if let (Some(path), Some(json)) = (checkpoints.as_deref(), trace) {
                write_atomic(path, json.as_bytes())?;
            }
        }
        Command::Bench {
            m,
            l,
            cr,
            trials,
            seed,
            active,
            r_intra,
            rho_inter,
            dict,
            recovery,
            out,
        } => {
            let settings = BenchSettings {
                block_size: recovery.block_size.or(file.block_size).unwrap_or(16),
                active_blocks: active,
                r_intra,
                rho_inter,
                use_dictionary: dict,
                recovery: recovery_config(&recovery, &file)?,
            };
            let m = m.or(file.m).unwrap_or(256);
            let seed = seed.or(file.seed).unwrap_or(0);
            let mut records = Vec::new();
            for &channels in &l {
                records.extend(bench_compression(
                    m, &cr, channels, trials, seed, &settings,
                )?);
            }
            write_atomic(&out, records_to_csv(&records)?.as_bytes())?;
            write_atomic(&sibling(&out, ".long.csv"), long_table(&records).as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STSBL_LOG", "off")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stsbl: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
