use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use sea_core::perturb::{self, PerturbKind, PerturbSpec};
use sea_core::pipeline::{self, FilterParams};
use sea_core::synth::{self, CoinTaskParams, IsiTaskParams, Task};
use sea_core::{spike, SpikeDataset};
use sea_snn::{Checkpoint, Trained};

use crate::config::{Experiment, ExperimentConfig, ModelKind};
use crate::error::{Error, Result};
use crate::plot::{self, PlotSpec};
use crate::sweep::{self, fit};

/// Worker threads for data-parallel work; unset means one per core.
pub const WORKERS_ENV: &str = "SEA_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "sea", version, about = "Spike-timing experiments: data, training, sweeps and figures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenTask {
    Isi,
    Coin,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic task as `train.sea.ndjson` and `test.sea.ndjson`.
    Gen {
        #[arg(value_enum)]
        task: GenTask,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8000)]
        train_size: usize,
        #[arg(long, default_value_t = 2000)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run Whole → Part → Norm on an SHD HDF5 file or an NDJSON dataset.
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long, default_value_t = 2)]
        theta: usize,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        floor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report of the training split; reuses its neurons and counts.
        #[arg(long)]
        train_report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb every sample of a dataset.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write a checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Architecture family: isi, coin or shd.
        #[arg(long)]
        arch: String,
        #[arg(long, default_value = "sgd")]
        model: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        delay_lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset; prints accuracy and confusion.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the sweep described by a TOML config.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Plot accuracy curves from a sweep table.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "perturbation")]
        x_label: String,
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        perturb_kind: Option<String>,
        #[arg(long)]
        chance: Option<f64>,
        #[arg(long)]
        mlp_reference: bool,
    },
    /// Draw one sample as a raster, optionally over a perturbed copy.
    Raster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        perturbed: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(format!("no such file: {}", path.display())))
    }
}

fn load(path: &Path) -> Result<SpikeDataset> {
    Ok(spike::load(existing(path)?)?)
}

fn experiment(name: &str) -> Result<Experiment> {
    match name {
        "isi" => Ok(Experiment::Isi),
        "coin" => Ok(Experiment::Coin),
        "shd" => Ok(Experiment::Shd),
        other => Err(Error::Config(format!("unknown architecture {other:?}"))),
    }
}

fn is_hdf5(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("h5" | "hdf5"))
}

#[cfg(feature = "hdf5")]
fn import_hdf5(path: &Path, split: &str) -> Result<SpikeDataset> {
    Ok(pipeline::shd::import_shd_hdf5(path, split)?)
}

#[cfg(not(feature = "hdf5"))]
fn import_hdf5(_: &Path, _: &str) -> Result<SpikeDataset> {
    Err(Error::Config("built without HDF5 support".into()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { task, out, train_size, test_size, seed, lambda } => {
            let task = match task {
                GenTask::Isi => {
                    if lambda.is_some() {
                        return Err(Error::Config("--lambda applies to the coin task only".into()));
                    }
                    Task::Isi(IsiTaskParams::default())
                }
                GenTask::Coin => Task::Coin(CoinTaskParams::with_lambda(lambda.unwrap_or(0.0))),
            };
            let (tr, te) = synth::gen_dataset(&task, train_size, test_size, seed)?;
            std::fs::create_dir_all(&out)?;
            spike::save(&tr, &out.join("train.sea.ndjson"))?;
            spike::save(&te, &out.join("test.sea.ndjson"))?;
        }
        Command::Normalize { input, split, theta, eps, floor, seed, train_report, out } => {
            let params = FilterParams { theta, epsilon: eps, class_floor: floor };
            params.validate().map_err(|e| Error::Config(e.to_string()))?;
            let whole = if is_hdf5(&input) { import_hdf5(existing(&input)?, &split)? } else { load(&input)? };
            let report = match train_report {
                Some(p) => Some(pipeline::read_report(existing(&p)?)?),
                None => None,
            };
            let result = pipeline::run(whole, params, seed, report.as_ref())?;
            pipeline::write_outputs(&result, &out, &split)?;
            println!(
                "{split}: {} retained neurons, {} part samples, {} dropped",
                result.report.retained_neurons.len(),
                result.part.len(),
                result.dropped.len()
            );
        }
        Command::Perturb { input, kind, param, seed, out } => {
            let kind = PerturbKind::parse(&kind, param).map_err(|e| Error::Config(e.to_string()))?;
            let ds = perturb::apply(&PerturbSpec::new(kind, seed), &load(&input)?)?;
            spike::save(&ds, &out)?;
        }
        Command::Train { train, test, arch, model, epochs, lr, batch_size, delay_lr, seed, out } => {
            let exp = experiment(&arch)?;
            let model: ModelKind = model.parse()?;
            let (tr, te) = (load(&train)?, load(&test)?);
            let base = ExperimentConfig {
                experiment: exp,
                output_dir: PathBuf::new(),
                data_dir: None,
                variants: vec![],
                models: vec![model],
                perturb: crate::config::Sweep { kind: "replace".into(), values: vec![0.0] },
                seeds: vec![seed],
                train_size: None,
                test_size: None,
                train: crate::config::TrainSettings { epochs, batch_size, lr, delay_lr, alpha: None },
            };
            let cfg = base.train_config(seed);
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
            let (trained, acc) = fit(exp, model, &tr, &te, &cfg)?;
            Checkpoint {
                model: trained,
                config: Some(cfg),
                variant: Some(tr.variant().to_string()),
            }
            .save(&out)?;
            println!("{}", serde_json::json!({ "test_accuracy": acc }));
        }
        Command::Eval { model, data } => {
            let ck = Checkpoint::load(existing(&model)?)?;
            let ds = load(&data)?;
            let eval = match &ck.model {
                Trained::Mlp(m) => m.evaluate(&ds)?,
                Trained::Snn(m) => {
                    sea_snn::evaluate(m, &sea_snn::Encoded::from_dataset(&ds, m.arch.dt_ms)?)?
                }
            };
            println!("{}", serde_json::to_string(&eval)?);
        }
        Command::Sweep { config, force } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = sweep::run_sweep(&cfg, force)?;
            if out.skipped {
                println!("up to date: {}", out.csv.display());
            } else {
                println!("{} rows written to {}", out.rows.len(), out.csv.display());
            }
        }
        Command::Plot { csv, out, title, x_label, experiment, perturb_kind, chance, mlp_reference } => {
            let spec = PlotSpec { title, x_label, experiment, perturb_kind, chance, mlp_reference };
            plot::emit_curves(existing(&csv)?, &spec, &out)?;
        }
        Command::Raster { data, index, perturbed, out } => {
            let ds = load(&data)?;
            let sample = ds
                .samples()
                .get(index)
                .ok_or_else(|| Error::Config(format!("index {index} out of range ({} samples)", ds.len())))?;
            let other = match &perturbed {
                Some(p) => Some(load(p)?),
                None => None,
            };
            let pair = match &other {
                Some(o) => Some(
                    o.samples()
                        .get(index)
                        .ok_or_else(|| Error::Config(format!("index {index} out of range in perturbed set")))?,
                ),
                None => None,
            };
            plot::raster_dump(sample, pair, &format!("sample {index} (class {})", sample.label()), &out)?;
        }
    }
    Ok(())
}

/// Builds the global rayon pool from [`WORKERS_ENV`].
pub fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Runtime(e.to_string()))
}
