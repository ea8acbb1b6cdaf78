//! Declarative experiment description, read from TOML.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sea_core::perturb::PerturbKind;
use sea_core::{seed, Variant};
use sea_snn::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Isi,
    Coin,
    Shd,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Isi => "isi",
            Experiment::Coin => "coin",
            Experiment::Shd => "shd",
        }
    }

    /// Synthetic tasks regenerate and retrain per condition; SHD trains once
    /// on clean data and perturbs only the test inputs.
    pub fn trains_per_condition(self) -> bool {
        !matches!(self, Experiment::Shd)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sgd,
    SgdDelay,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sgd => "sgd",
            ModelKind::SgdDelay => "sgd_delay",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(ModelKind::Sgd),
            "sgd_delay" => Ok(ModelKind::SgdDelay),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// The swept condition. `lambda` (coincidence overlap) is only valid for
/// `coin`; `reverse` takes 0 (original) or 1 (reversed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub kind: String,
    pub values: Vec<f64>,
}

/// A resolved condition: either a synthetic-task parameter or a perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    Lambda(f64),
    Perturb(Option<PerturbKind>),
}

impl Sweep {
    pub fn condition(&self, value: f64) -> Result<Condition> {
        if self.kind == "lambda" {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("lambda {value} outside [0, 1]")));
            }
            return Ok(Condition::Lambda(value));
        }
        if self.kind == "reverse" {
            return match value {
                v if v == 0.0 => Ok(Condition::Perturb(None)),
                v if v == 1.0 => Ok(Condition::Perturb(Some(PerturbKind::Reverse))),
                v => Err(Error::Config(format!("reverse takes 0 or 1, got {v}"))),
            };
        }
        let kind = PerturbKind::parse(&self.kind, Some(value)).map_err(|e| Error::Config(e.to_string()))?;
        // zero strength is the clean condition
        Ok(Condition::Perturb(if value == 0.0 { None } else { Some(kind) }))
    }
}

/// Training overrides; unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub delay_lr: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    /// Directory with `{split}_{variant}.sea.ndjson` files (SHD only).
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// SHD variants to run; ignored by the synthetic tasks.
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    pub models: Vec<ModelKind>,
    pub perturb: Sweep,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub train: TrainSettings,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Norm]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return bad("models list is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds list is empty".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.perturb.values.is_empty() {
            return bad("perturbation value list is empty".into());
        }
        if self.perturb.kind == "lambda" && self.experiment != Experiment::Coin {
            return bad("lambda sweeps are only defined for the coin experiment".into());
        }
        for &v in &self.perturb.values {
            self.perturb.condition(v)?;
        }
        if self.experiment == Experiment::Shd {
            if self.data_dir.is_none() {
                return bad("shd experiments need data_dir".into());
            }
            if self.variants.is_empty() {
                return bad("variants list is empty".into());
            }
        }
        self.train_config(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn train_size(&self) -> usize {
        self.train_size.unwrap_or(8000)
    }

    pub fn test_size(&self) -> usize {
        self.test_size.unwrap_or(2000)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let base = TrainConfig {
            epochs: if self.experiment == Experiment::Shd { 100 } else { 50 },
            seed,
            ..TrainConfig::default()
        };
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            lr: t.lr.unwrap_or(base.lr),
            delay_lr: t.delay_lr.or(base.delay_lr),
            alpha: t.alpha.unwrap_or(base.alpha),
            ..base
        }
    }

    /// Stable identifier of this configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", seed::tag(&canonical))
    }
}
