//! Sweep orchestration: one result row per variant × model × condition × seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sea_core::perturb::{self, PerturbKind, PerturbSpec};
use sea_core::synth::{self, CoinTaskParams, IsiTaskParams, Task};
use sea_core::{seed, spike, SpikeDataset, Variant};
use sea_snn::model::{Architecture, Encoded, SnnModel};
use sea_snn::{evaluate, mlp_count_baseline, train, Checkpoint, TrainConfig, Trained};

use crate::config::{Condition, Experiment, ExperimentConfig, ModelKind};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const META_FILE: &str = "sweep.json";

/// One CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub experiment: String,
    pub variant: String,
    pub model: String,
    pub perturb_kind: String,
    pub perturb_value: f64,
    pub seed: u64,
    /// Empty when training diverged.
    pub accuracy: Option<f64>,
    pub epochs: usize,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    config_hash: String,
    rows: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub csv: PathBuf,
    /// True when an identical completed sweep was found and nothing ran.
    pub skipped: bool,
}

/// Architecture for a spiking model on this experiment and dataset shape.
pub fn architecture(experiment: Experiment, model: ModelKind, data: &SpikeDataset) -> Architecture {
    let mut arch = match experiment {
        Experiment::Isi => Architecture::isi(),
        Experiment::Coin => Architecture::coin(),
        Experiment::Shd => Architecture::shd(data.num_neurons(), data.num_classes(), false),
    };
    arch.inputs = data.num_neurons();
    arch.outputs = data.num_classes();
    arch.delays = model == ModelKind::SgdDelay;
    arch
}

/// Trains `model` on `train`, selecting on `test` where the trainer does so.
/// Returns the fitted model and its accuracy on `test`.
pub fn fit(
    experiment: Experiment,
    model: ModelKind,
    train_set: &SpikeDataset,
    test_set: &SpikeDataset,
    cfg: &TrainConfig,
) -> Result<(Trained, f64)> {
    match model {
        ModelKind::Mlp => {
            let out = mlp_count_baseline(train_set, test_set, cfg)?;
            Ok((Trained::Mlp(out.model), out.test_accuracy))
        }
        ModelKind::Sgd | ModelKind::SgdDelay => {
            let arch = architecture(experiment, model, train_set);
            let dt = arch.dt_ms;
            let net = SnnModel::new(arch, seed::derive(cfg.seed, &[seed::tag("init")]))?;
            let tr = Encoded::from_dataset(train_set, dt)?;
            let te = Encoded::from_dataset(test_set, dt)?;
            let out = train(net, &tr, &te, cfg)?;
            Ok((Trained::Snn(out.model), out.best_test_accuracy))
        }
    }
}

pub fn accuracy(model: &Trained, data: &SpikeDataset) -> Result<f64> {
    Ok(match model {
        Trained::Mlp(m) => m.evaluate(data)?.accuracy,
        Trained::Snn(m) => evaluate(m, &Encoded::from_dataset(data, m.arch.dt_ms)?)?.accuracy,
    })
}

fn perturbed(data: &SpikeDataset, kind: Option<PerturbKind>, seed: u64) -> Result<SpikeDataset> {
    Ok(match kind {
        Some(k) => perturb::apply(&PerturbSpec::new(k, seed), data)?,
        None => data.clone(),
    })
}

/// Data files of an SHD variant.
pub fn variant_paths(dir: &Path, variant: Variant) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("train_{variant}.sea.ndjson")),
        dir.join(format!("test_{variant}.sea.ndjson")),
    )
}

struct Cell {
    variant: Variant,
    model: ModelKind,
    seed: u64,
    /// One value when training per condition, all values otherwise.
    values: Vec<f64>,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let variants = if cfg.experiment.trains_per_condition() {
        vec![Variant::Synthetic]
    } else {
        cfg.variants.clone()
    };
    let mut out = Vec::new();
    for &variant in &variants {
        for &model in &cfg.models {
            if cfg.experiment.trains_per_condition() {
                for &v in &cfg.perturb.values {
                    for &seed in &cfg.seeds {
                        out.push(Cell { variant, model, seed, values: vec![v] });
                    }
                }
            } else {
                for &seed in &cfg.seeds {
                    out.push(Cell { variant, model, seed, values: cfg.perturb.values.clone() });
                }
            }
        }
    }
    out
}

/// Synthetic train/test splits for one condition, generated from `seed`.
fn synthetic_data(cfg: &ExperimentConfig, condition: Condition, seed: u64) -> Result<(SpikeDataset, SpikeDataset)> {
    let task = match (cfg.experiment, condition) {
        (Experiment::Coin, Condition::Lambda(l)) => Task::Coin(CoinTaskParams::with_lambda(l)),
        (Experiment::Coin, _) => Task::Coin(CoinTaskParams::default()),
        _ => Task::Isi(IsiTaskParams::default()),
    };
    let (tr, te) = synth::gen_dataset(&task, cfg.train_size(), cfg.test_size(), seed::derive(seed, &[seed::tag("data")]))?;
    match condition {
        Condition::Perturb(kind) => Ok((
            perturbed(&tr, kind, seed::derive(seed, &[seed::tag("train-perturb")]))?,
            perturbed(&te, kind, seed::derive(seed, &[seed::tag("test-perturb")]))?,
        )),
        Condition::Lambda(_) => Ok((tr, te)),
    }
}

fn load_variant(cfg: &ExperimentConfig, variant: Variant) -> Result<(SpikeDataset, SpikeDataset)> {
    let dir = cfg.data_dir.as_deref().ok_or_else(|| Error::Config("data_dir is not set".into()))?;
    let (tr, te) = variant_paths(dir, variant);
    Ok((spike::load(&tr)?, spike::load(&te)?))
}

fn model_path(cfg: &ExperimentConfig, cell: &Cell) -> PathBuf {
    cfg.output_dir
        .join("models")
        .join(format!("{}_{}_s{}.json", cell.variant, cell.model, cell.seed))
}

/// Runs one cell. A diverged training run yields rows without accuracy.
fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<Vec<(f64, Option<f64>, f64)>> {
    let train_cfg = cfg.train_config(seed::derive(cell.seed, &[seed::tag("train")]));
    let start = Instant::now();
    let diverged = |e: &Error| matches!(e, Error::Model(sea_snn::Error::Diverged { .. }));
    if cfg.experiment.trains_per_condition() {
        let v = cell.values[0];
        let (tr, te) = synthetic_data(cfg, cfg.perturb.condition(v)?, cell.seed)?;
        let acc = match fit(cfg.experiment, cell.model, &tr, &te, &train_cfg) {
            Ok((_, acc)) => Some(acc),
            Err(e) if diverged(&e) => None,
            Err(e) => return Err(e),
        };
        return Ok(vec![(v, acc, start.elapsed().as_secs_f64())]);
    }
    let (tr, te) = load_variant(cfg, cell.variant)?;
    let model = match fit(cfg.experiment, cell.model, &tr, &te, &train_cfg) {
        Ok((m, _)) => m,
        Err(e) if diverged(&e) => {
            let wall = start.elapsed().as_secs_f64();
            return Ok(cell.values.iter().map(|&v| (v, None, wall)).collect());
        }
        Err(e) => return Err(e),
    };
    let path = model_path(cfg, cell);
    std::fs::create_dir_all(path.parent().expect("models dir"))?;
    Checkpoint {
        model: model.clone(),
        config: Some(train_cfg),
        variant: Some(cell.variant.to_string()),
    }
    .save(&path)?;
    let trained_s = start.elapsed().as_secs_f64();
    cell.values
        .iter()
        .map(|&v| {
            let t0 = Instant::now();
            let kind = match cfg.perturb.condition(v)? {
                Condition::Perturb(k) => k,
                Condition::Lambda(_) => return Err(Error::Config("lambda sweeps need the coin experiment".into())),
            };
            let seed = seed::derive(cell.seed, &[seed::tag(&cfg.perturb.kind), v.to_bits()]);
            let acc = accuracy(&model, &perturbed(&te, kind, seed)?)?;
            Ok((v, Some(acc), trained_s + t0.elapsed().as_secs_f64()))
        })
        .collect()
}

fn check_inputs(cfg: &ExperimentConfig) -> Result<()> {
    if let (Experiment::Shd, Some(dir)) = (cfg.experiment, &cfg.data_dir) {
        for &v in &cfg.variants {
            let (tr, te) = variant_paths(dir, v);
            for p in [tr, te] {
                if !p.is_file() {
                    return Err(Error::Config(format!("missing dataset {}", p.display())));
                }
            }
        }
    }
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Runs every cell (in parallel on the current rayon pool) and writes
/// `results.csv` atomically. A finished sweep with the same config hash is
/// left alone unless `force` is set.
pub fn run_sweep(cfg: &ExperimentConfig, force: bool) -> Result<SweepOutcome> {
    cfg.validate()?;
    check_inputs(cfg)?;
    let hash = cfg.hash();
    let csv_path = cfg.output_dir.join(RESULTS_FILE);
    let meta_path = cfg.output_dir.join(META_FILE);
    if !force && csv_path.is_file() {
        if let Ok(text) = std::fs::read_to_string(&meta_path) {
            if serde_json::from_str::<Meta>(&text).is_ok_and(|m| m.config_hash == hash) {
                return Ok(SweepOutcome { rows: read_csv(&csv_path)?, csv: csv_path, skipped: true });
            }
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let cells = cells(cfg);
    let results: Vec<Vec<(f64, Option<f64>, f64)>> = cells.par_iter().map(|c| run_cell(cfg, c)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        for (v, acc, wall) in res {
            rows.push(ResultRow {
                run_id: format!("{hash}-{:04}", rows.len()),
                experiment: cfg.experiment.to_string(),
                variant: cell.variant.to_string(),
                model: cell.model.to_string(),
                perturb_kind: cfg.perturb.kind.clone(),
                perturb_value: v,
                seed: cell.seed,
                accuracy: acc,
                epochs: cfg.train_config(0).epochs,
                wall_s: wall,
            });
        }
    }
    write_csv(&rows, &csv_path)?;
    let meta = Meta { config_hash: hash, rows: rows.len() };
    let tmp = meta_path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&meta)?)?;
    std::fs::rename(tmp, &meta_path)?;
    Ok(SweepOutcome { rows, csv: csv_path, skipped: false })
}
