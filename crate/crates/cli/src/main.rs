//! `scl` — the pipeline driver: generate synthetic subspace data, train the
//! self-expressive contrastive model on embedding files, cluster, evaluate,
//! export affinities/scatters, and sweep hyperparameters.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scl_core::clustering::{kmeans, spectral_cluster, symmetrize, KChoice};
use scl_core::data_io;
use scl_core::losses::LossConfig;
use scl_core::metrics::{clustering_accuracy, nmi};
use scl_core::model::{affinity, latents};
use scl_core::trainer::{train, TrainConfig};
use scl_core::SclError;

#[derive(Parser)]
#[command(name = "scl", version, about = "Subspace contrastive learning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Spectral,
    Kmeans,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic union-of-subspaces dataset
    Synth {
        /// JSON file with k, subspace_dim, ambient_dim, points_per_cluster,
        /// noise_sigma, seed
        #[arg(long)]
        spec: PathBuf,
        /// Output embedding file (binary container)
        #[arg(long)]
        out: PathBuf,
        /// Output ground-truth labels, one per line
        #[arg(long)]
        labels: PathBuf,
    },
    /// Train on an embedding file and write a checkpoint
    Train {
        #[arg(long)]
        embeddings: PathBuf,
        /// Train config JSON ({} for all defaults)
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch CSV log
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Cluster embeddings with a trained model
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Cluster count; spectral mode estimates it via the eigengap when
        /// omitted
        #[arg(long)]
        k: Option<usize>,
        /// Eigengap search bound for auto-k
        #[arg(long, default_value_t = 30, conflicts_with = "k")]
        k_max: usize,
        #[arg(long)]
        seed: u64,
        /// Maximum n for the dense spectral path
        #[arg(long, default_value_t = 5000)]
        spectral_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted labels against ground truth (JSON on stdout)
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Write the learned affinity matrix as CSV
    ExportAffinity {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Subsample this many rows (uniform, without replacement); the
        /// index list is written next to the CSV as `<out>.indices`
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a 2-D PCA projection of the latents as pc1,pc2,label CSV
    ExportScatter {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain per parameter value and report value,acc,nmi rows
    Sweep {
        /// lambda_reg or t
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.0001,0.001,0.01,0.1,1
        #[arg(long)]
        values: String,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(SclError),
}

impl From<SclError> for CliError {
    fn from(e: SclError) -> Self {
        CliError::Core(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                SclError::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { spec, out, labels } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| SclError::io(&spec, e))?;
            let parsed: data_io::SynthSpec = serde_json::from_str(&text)
                .map_err(|e| SclError::format(&spec, format!("invalid synth spec: {e}")))?;
            let (data, truth) = data_io::synth_subspace_dataset(&parsed)?;
            data_io::write_embeddings(&out, &data, data_io::Dtype::F64)?;
            data_io::write_labels(&labels, &truth)?;
            eprintln!(
                "wrote {} x {} embeddings to {} and labels to {}",
                data.rows(),
                data.cols(),
                out.display(),
                labels.display()
            );
            Ok(())
        }
        Command::Train {
            embeddings,
            config,
            out,
            log,
        } => {
            let u = data_io::read_embeddings(&embeddings)?;
            let cfg = read_config(&config)?;
            let (params, report) = train(&u, &cfg)?;
            data_io::write_checkpoint(&out, &params)?;
            if let Some(log_path) = log {
                write_text(&log_path, &report.to_csv())?;
            }
            if let Some(last) = report.epochs.last() {
                eprintln!(
                    "trained {} epochs in {:.1}s: loss {:.6}, tau {:.4}, pos_sim {:.4}",
                    report.epochs.len(),
                    report.wall_time_secs,
                    last.total_loss,
                    last.tau,
                    last.avg_pos_sim
                );
            } else {
                eprintln!("trained 0 epochs (initialization checkpoint)");
            }
            Ok(())
        }
        Command::Cluster {
            embeddings,
            model,
            method,
            k,
            k_max,
            seed,
            spectral_cap,
            out,
        } => {
            if let Some(k) = k {
                let min_k = match method {
                    MethodArg::Spectral => 2,
                    MethodArg::Kmeans => 1,
                };
                if k < min_k {
                    return Err(usage(format!("--k must be >= {min_k} for this method")));
                }
            }
            if k_max < 2 {
                return Err(usage("--k-max must be >= 2"));
            }
            let u = data_io::read_embeddings(&embeddings)?;
            let params = data_io::read_checkpoint(&model)?;
            let result = match method {
                MethodArg::Kmeans => {
                    let k = k.ok_or_else(|| usage("kmeans clustering requires --k"))?;
                    let z = latents(&params, &u)?;
                    kmeans(&z, k, seed)?
                }
                MethodArg::Spectral => {
                    if u.rows() > spectral_cap {
                        return Err(SclError::contract(format!(
                            "spectral path supports n <= {spectral_cap} (got {}); \
                             subsample the embeddings or use --method kmeans",
                            u.rows()
                        ))
                        .into());
                    }
                    let a = affinity(&params, &u)?;
                    let s = symmetrize(&a)?;
                    let choice = match k {
                        Some(k) => KChoice::Fixed(k),
                        None => KChoice::Auto { k_max },
                    };
                    spectral_cluster(&s, choice, seed)?
                }
            };
            data_io::write_labels(&out, &result.labels)?;
            eprintln!(
                "clustered {} points into k = {} ({})",
                result.labels.len(),
                result.k,
                out.display()
            );
            Ok(())
        }
        Command::Eval { pred, truth } => {
            let pred_labels = data_io::read_labels(&pred)?;
            let truth_labels = data_io::read_labels(&truth)?;
            let acc = clustering_accuracy(&pred_labels, &truth_labels)?;
            let nmi_value = nmi(&pred_labels, &truth_labels)?;
            println!(
                "{}",
                serde_json::json!({
                    "acc": acc,
                    "nmi": nmi_value,
                    "n": pred_labels.len(),
                    "k_pred": distinct(&pred_labels),
                    "k_true": distinct(&truth_labels),
                })
            );
            Ok(())
        }
        Command::ExportAffinity {
            embeddings,
            model,
            sample,
            seed,
            out,
        } => {
            if sample == Some(0) {
                return Err(usage("--sample must be >= 1"));
            }
            let u = data_io::read_embeddings(&embeddings)?;
            let params = data_io::read_checkpoint(&model)?;
            let (selected, indices) = match sample {
                Some(s) if s < u.rows() => {
                    let indices = sample_indices(u.rows(), s, seed);
                    (u.select_rows(&indices), Some(indices))
                }
                Some(_) => (u.clone(), Some((0..u.rows()).collect())),
                None => (u, None),
            };
            let a = affinity(&params, &selected)?;
            data_io::export_affinity_csv(&a, &out)?;
            if let Some(indices) = indices {
                let mut idx_path = out.as_os_str().to_owned();
                idx_path.push(".indices");
                data_io::write_labels(PathBuf::from(idx_path), &indices)?;
            }
            eprintln!("wrote {0} x {0} affinity to {1}", a.rows(), out.display());
            Ok(())
        }
        Command::ExportScatter {
            embeddings,
            model,
            labels,
            out,
        } => {
            let u = data_io::read_embeddings(&embeddings)?;
            let params = data_io::read_checkpoint(&model)?;
            let label_values = data_io::read_labels(&labels)?;
            let z = latents(&params, &u)?;
            data_io::export_pca_scatter(&z, &label_values, &out)?;
            eprintln!("wrote {} scatter rows to {}", z.rows(), out.display());
            Ok(())
        }
        Command::Sweep {
            param,
            values,
            embeddings,
            truth,
            config,
            out,
        } => {
            if param != "lambda_reg" && param != "t" {
                return Err(usage(format!(
                    "--param must be lambda_reg or t, got {param:?}"
                )));
            }
            let parsed_values = parse_values(&values)?;
            let u = data_io::read_embeddings(&embeddings)?;
            let truth_labels = data_io::read_labels(&truth)?;
            if truth_labels.len() != u.rows() {
                return Err(SclError::contract(format!(
                    "{} truth labels for {} embedding rows",
                    truth_labels.len(),
                    u.rows()
                ))
                .into());
            }
            let base_cfg = read_config(&config)?;
            let k = distinct(&truth_labels);
            if k < 2 {
                return Err(SclError::contract(
                    "sweep evaluation needs at least 2 distinct truth labels",
                )
                .into());
            }
            let mut csv = String::from("value,acc,nmi\n");
            for &value in &parsed_values {
                let mut cfg = base_cfg;
                apply_sweep_param(&mut cfg.loss, &param, value)?;
                let (params, _) = train(&u, &cfg)?;
                let a = affinity(&params, &u)?;
                let s = symmetrize(&a)?;
                let result = spectral_cluster(&s, KChoice::Fixed(k), cfg.seed)?;
                let acc = clustering_accuracy(&result.labels, &truth_labels)?;
                let nmi_value = nmi(&result.labels, &truth_labels)?;
                writeln!(csv, "{},{},{}", value, acc, nmi_value).expect("string write");
                eprintln!("{param} = {value}: acc {acc:.4}, nmi {nmi_value:.4}");
            }
            write_text(&out, &csv)?;
            Ok(())
        }
    }
}

fn read_config(path: &PathBuf) -> Result<TrainConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| SclError::io(path, e))?;
    TrainConfig::from_json(&text).map_err(|e| {
        SclError::format(path, e.to_string()).into()
    })
}

fn apply_sweep_param(loss: &mut LossConfig, param: &str, value: f64) -> Result<(), CliError> {
    match param {
        "lambda_reg" => {
            if value < 0.0 {
                return Err(usage("lambda_reg values must be >= 0"));
            }
            loss.lambda_reg = value;
        }
        "t" => {
            if value <= 0.0 {
                return Err(usage("t values must be > 0"));
            }
            loss.t = value;
        }
        _ => unreachable!("validated above"),
    }
    Ok(())
}

fn parse_values(values: &str) -> Result<Vec<f64>, CliError> {
    let parsed: Result<Vec<f64>, _> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect();
    match parsed {
        Ok(list) if !list.is_empty() && list.iter().all(|v| v.is_finite()) => Ok(list),
        _ => Err(usage(format!("--values must be a comma-separated list of finite numbers, got {values:?}"))),
    }
}

fn distinct(labels: &[usize]) -> usize {
    let mut unique: Vec<usize> = labels.to_vec();
    unique.sort_unstable();
    unique.dedup();
    unique.len()
}

/// Uniform sample of `count` indices without replacement (partial
/// Fisher-Yates), returned in ascending order so exported affinities keep
/// the dataset's row order.
fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut chosen = pool[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), SclError> {
    let tmp = {
        let mut t = path.as_os_str().to_owned();
        t.push(".tmp");
        PathBuf::from(t)
    };
    std::fs::write(&tmp, text).map_err(|e| SclError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| SclError::io(path, e))?;
    Ok(())
}
