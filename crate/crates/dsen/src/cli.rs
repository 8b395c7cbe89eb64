//! The `dsen` binary: dataset generation, training, evaluation, threshold
//! sweeps, and score histograms.
//!
//! Exit codes: 0 success, 1 validation or format error, 2 numerical abort.
//! Errors go to standard error; machine-readable results go to standard
//! output or files under `--out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dsen_core::data::{gen_synthetic, GenSpec, Split};
use dsen_core::eval::{evaluate, score_histogram, sweep_tau, class_embeddings};
use dsen_core::losses::LossToggles;
use dsen_core::train::{train_with_observer, Phase, TrainConfig};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset_io::{load_dataset, save_dataset};
use crate::error::CliError;
use crate::manifest::{
    config_hash, dataset_fingerprint, save_manifest, MetricsSummary, RunManifest,
};

#[derive(Parser)]
#[command(name = "dsen", version, about = "Zero-shot embedding network trainer and evaluator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    S2v,
    Dsp,
    Ddc,
    Dsen,
}

impl Mode {
    fn toggles(self) -> LossToggles {
        match self {
            Mode::S2v => LossToggles::s2v(),
            Mode::Dsp => LossToggles::dsp(),
            Mode::Ddc => LossToggles::ddc(),
            Mode::Dsen => LossToggles::dsen(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    Seen,
    Unseen,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        seen: usize,
        #[arg(long, default_value_t = 5)]
        unseen: usize,
        #[arg(long, default_value_t = 16)]
        attr_dim: usize,
        #[arg(long, default_value_t = 32)]
        feat_dim: usize,
        #[arg(long, default_value_t = 30)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a model; writes checkpoint, JSONL log, and run manifest
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss configuration: s2v, dsp, ddc, or dsen
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs1: Option<usize>,
        #[arg(long)]
        epochs2: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        adapter: bool,
        /// L2-normalize attribute rows after loading
        #[arg(long)]
        normalize_attrs: bool,
        /// JSON training configuration; explicit flags override its fields
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a checkpoint; writes a JSON report to standard output
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Rank over unseen classes only; reports MCA_t alone
        #[arg(long)]
        conventional: bool,
        /// Also export per-class embeddings as CSV to this file
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// L2-normalize attribute rows after loading
        #[arg(long)]
        normalize_attrs: bool,
    },
    /// Sweep the routing threshold; writes CSV `tau,mca_s,mca_t,h` to stdout
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        /// L2-normalize attribute rows after loading
        #[arg(long)]
        normalize_attrs: bool,
    },
    /// Histogram of max seen-class scores; CSV `bin_lo,bin_hi,count,percent`
    Hist {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Which evaluation domain to score: the seen-class val split or the
        /// unseen-class test split
        #[arg(long, value_enum)]
        split: Domain,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// L2-normalize attribute rows after loading
        #[arg(long)]
        normalize_attrs: bool,
    },
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen {
            out,
            seen,
            unseen,
            attr_dim,
            feat_dim,
            samples_per_class,
            noise,
            seed,
        } => cmd_gen(
            &out,
            GenSpec {
                n_seen: seen,
                n_unseen: unseen,
                attr_dim,
                feat_dim,
                samples_per_class,
                noise_std: noise,
                seed,
            },
        ),
        Command::Train {
            data,
            out,
            mode,
            lambda1,
            lambda2,
            alpha,
            hidden,
            epochs1,
            epochs2,
            batch,
            seed,
            adapter,
            normalize_attrs,
            config,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let raw = fs::read_to_string(&path).map_err(|e| {
                        CliError::Validation(format!("config {}: {e}", path.display()))
                    })?;
                    serde_json::from_str(&raw)
                        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?
                }
                None => TrainConfig::default(),
            };
            if let Some(m) = mode {
                cfg.toggles = m.toggles();
            }
            if let Some(v) = lambda1 {
                cfg.weights.lambda1 = v;
            }
            if let Some(v) = lambda2 {
                cfg.weights.lambda2 = v;
            }
            if let Some(v) = alpha {
                cfg.weights.alpha = v;
            }
            if let Some(v) = hidden {
                cfg.hidden_dim = v;
            }
            if let Some(v) = epochs1 {
                cfg.phase1_epochs = v;
            }
            if let Some(v) = epochs2 {
                cfg.phase2_epochs = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if adapter {
                cfg.adapter_enabled = true;
            }
            cmd_train(&data, &out, cfg, normalize_attrs)
        }
        Command::Eval {
            model,
            data,
            tau,
            conventional,
            embeddings,
            normalize_attrs,
        } => cmd_eval(&model, &data, tau, conventional, embeddings.as_deref(), normalize_attrs),
        Command::Sweep {
            model,
            data,
            grid_step,
            normalize_attrs,
        } => cmd_sweep(&model, &data, grid_step, normalize_attrs),
        Command::Hist {
            model,
            data,
            split,
            bins,
            normalize_attrs,
        } => cmd_hist(&model, &data, split, bins, normalize_attrs),
    }
}

fn cmd_gen(out: &Path, spec: GenSpec) -> Result<(), CliError> {
    if spec.n_seen < 1 || spec.n_unseen < 1 || spec.samples_per_class < 1 {
        return Err(CliError::validation("class and sample counts must be at least 1"));
    }
    if spec.noise_std < 0.0 {
        return Err(CliError::validation("noise must be non-negative"));
    }
    let ds = gen_synthetic(&spec);
    save_dataset(&ds, out)?;
    eprintln!(
        "wrote {} samples, {} seen / {} unseen classes to {}",
        ds.n_samples(),
        ds.seen_classes.len(),
        ds.unseen_classes.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(data: &Path, out: &Path, config: TrainConfig, normalize_attrs: bool) -> Result<(), CliError> {
    let mut ds = load_dataset(data)?;
    if normalize_attrs {
        ds.normalize_attributes();
    }
    fs::create_dir_all(out)?;
    let hash = config_hash(&config);
    let warm_start = config.warm_start_epoch();
    let phase1 = config.phase1_epochs;

    let ckpt_path = out.join("checkpoint.ckpt");
    let mut log = String::new();
    let mut boundary_err: Option<CliError> = None;
    let (model, report) = train_with_observer(&ds, &config, &mut |model, record| {
        log.push_str(&serde_json::to_string(record).expect("epoch record serializes"));
        log.push('\n');
        // phase-boundary checkpoints: end of phase A, end of phase B
        let boundary = if record.epoch + 1 == warm_start && warm_start < phase1 {
            Some("checkpoint_phase_a.ckpt")
        } else if record.epoch + 1 == phase1 && record.phase != Phase::C {
            Some("checkpoint_phase_b.ckpt")
        } else {
            None
        };
        if let Some(name) = boundary {
            if let Err(e) = save_checkpoint(model, &hash, &out.join(name)) {
                boundary_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = boundary_err {
        return Err(e);
    }

    save_checkpoint(&model, &hash, &ckpt_path)?;
    fs::write(out.join("train_log.jsonl"), log)?;
    let manifest = RunManifest {
        seed: config.seed,
        dataset_fingerprint: dataset_fingerprint(&ds),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        checkpoint_path: "checkpoint.ckpt".to_string(),
        metrics: MetricsSummary::from_report(&report),
        config,
    };
    save_manifest(&manifest, &out.join("manifest.json"))?;
    eprintln!(
        "trained {} epochs; checkpoint at {}",
        report.epochs.len(),
        ckpt_path.display()
    );
    Ok(())
}

fn load_model_and_data(
    model_path: &Path,
    data_path: &Path,
    normalize_attrs: bool,
) -> Result<(dsen_core::DsenModel, dsen_core::ZslDataset), CliError> {
    let (model, _) = load_checkpoint(model_path)?;
    let mut ds = load_dataset(data_path)?;
    if normalize_attrs {
        ds.normalize_attributes();
    }
    if model.attr_dim != ds.attr_dim() || model.feat_dim != ds.feat_dim() {
        return Err(CliError::Validation(format!(
            "checkpoint dims (attr {}, feat {}) do not match dataset (attr {}, feat {})",
            model.attr_dim,
            model.feat_dim,
            ds.attr_dim(),
            ds.feat_dim()
        )));
    }
    if model.n_seen_classes != ds.seen_classes.len() {
        return Err(CliError::Validation(format!(
            "checkpoint has {} seen classes, dataset has {}",
            model.n_seen_classes,
            ds.seen_classes.len()
        )));
    }
    Ok((model, ds))
}

fn cmd_eval(
    model_path: &Path,
    data_path: &Path,
    tau: f64,
    conventional: bool,
    embeddings: Option<&Path>,
    normalize_attrs: bool,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::validation("tau must be in [0, 1]"));
    }
    let (model, ds) = load_model_and_data(model_path, data_path, normalize_attrs)?;
    let result = evaluate(&model, &ds, tau, conventional)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    if let Some(path) = embeddings {
        let rows = class_embeddings(&model, &ds)?;
        let mut csv = String::new();
        for row in rows {
            write!(csv, "{},{}", row.class_id, row.domain).unwrap();
            for v in row.values {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

fn cmd_sweep(model_path: &Path, data_path: &Path, grid_step: f64, normalize_attrs: bool) -> Result<(), CliError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CliError::validation("grid step must be in (0, 1]"));
    }
    let (model, ds) = load_model_and_data(model_path, data_path, normalize_attrs)?;
    let n = (1.0 / grid_step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * grid_step).min(1.0)).collect();
    let rows = sweep_tau(&model, &ds, &grid)?;
    println!("tau,mca_s,mca_t,h");
    for r in rows {
        println!("{:.4},{:.4},{:.4},{:.4}", r.tau, r.mca_s, r.mca_t, r.h);
    }
    Ok(())
}

fn cmd_hist(model_path: &Path, data_path: &Path, split: Domain, bins: usize, normalize_attrs: bool) -> Result<(), CliError> {
    if bins < 1 {
        return Err(CliError::validation("bins must be at least 1"));
    }
    let (model, ds) = load_model_and_data(model_path, data_path, normalize_attrs)?;
    let indices: Vec<usize> = match split {
        Domain::Seen => ds
            .sample_indices(Split::Val)
            .into_iter()
            .filter(|&i| ds.is_seen(ds.labels[i]))
            .collect(),
        Domain::Unseen => ds
            .sample_indices(Split::Test)
            .into_iter()
            .filter(|&i| !ds.is_seen(ds.labels[i]))
            .collect(),
    };
    if indices.is_empty() {
        return Err(CliError::validation("no samples in the requested domain"));
    }
    let features = ds.features.select_rows(&indices);
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let hist = score_histogram(&model, &features, &edges)?;
    println!("bin_lo,bin_hi,count,percent");
    for b in hist {
        println!("{:.4},{:.4},{},{:.4}", b.lo, b.hi, b.count, b.percent);
    }
    Ok(())
}
