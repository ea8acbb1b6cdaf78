//! Single-file JSON checkpoints; every tensor is base64 of little-endian f64.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::model::{Architecture, SnnModel};
use crate::surrogate::SpikeFn;
use crate::train::TrainConfig;

pub const FORMAT: &str = "sea-checkpoint/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Snn(SnnModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Snn { architecture: Architecture, spike: SpikeFn },
    Mlp { inputs: usize, hidden: usize, outputs: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct File {
    format: String,
    model: Header,
    tensors: BTreeMap<String, String>,
    config: Option<TrainConfig>,
    variant: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Trained,
    pub config: Option<TrainConfig>,
    /// Variant tag of the training set.
    pub variant: Option<String>,
}

pub fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint("tensor length is not a multiple of 8 bytes".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn take(tensors: &BTreeMap<String, String>, name: &str, len: usize) -> Result<Vec<f64>> {
    let text = tensors
        .get(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
    let v = decode(text)?;
    if v.len() != len {
        return Err(Error::Checkpoint(format!("tensor {name} has {} values, expected {len}", v.len())));
    }
    Ok(v)
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut tensors = BTreeMap::new();
        let model = match &self.model {
            Trained::Snn(m) => {
                for (l, layer) in m.layers.iter().enumerate() {
                    tensors.insert(format!("layer{l}.weights"), encode(&layer.weights));
                    tensors.insert(format!("layer{l}.log_tau"), encode(&[layer.log_tau]));
                }
                for (l, d) in m.delays.iter().enumerate() {
                    tensors.insert(format!("delay{l}"), encode(d));
                }
                Header::Snn {
                    architecture: m.arch.clone(),
                    spike: m.spike,
                }
            }
            Trained::Mlp(m) => {
                for (name, v) in [("mean", &m.mean), ("std", &m.std), ("w1", &m.w1), ("b1", &m.b1), ("w2", &m.w2), ("b2", &m.b2)] {
                    tensors.insert(name.to_string(), encode(v));
                }
                Header::Mlp {
                    inputs: m.inputs,
                    hidden: m.hidden,
                    outputs: m.outputs,
                }
            }
        };
        let file = File {
            format: FORMAT.to_string(),
            model,
            tensors,
            config: self.config.clone(),
            variant: self.variant.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: File = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
        }
        let t = &file.tensors;
        let model = match file.model {
            Header::Snn { architecture, spike } => {
                let mut m = SnnModel::new(architecture, 0)?.with_spike_fn(spike);
                for (l, layer) in m.layers.iter_mut().enumerate() {
                    layer.weights = take(t, &format!("layer{l}.weights"), layer.weights.len())?;
                    layer.log_tau = take(t, &format!("layer{l}.log_tau"), 1)?[0];
                }
                for (l, d) in m.delays.iter_mut().enumerate() {
                    *d = take(t, &format!("delay{l}"), d.len())?;
                }
                Trained::Snn(m)
            }
            Header::Mlp { inputs, hidden, outputs } => Trained::Mlp(MlpModel {
                inputs,
                hidden,
                outputs,
                mean: take(t, "mean", inputs)?,
                std: take(t, "std", inputs)?,
                w1: take(t, "w1", inputs * hidden)?,
                b1: take(t, "b1", hidden)?,
                w2: take(t, "w2", hidden * outputs)?,
                b2: take(t, "b2", outputs)?,
            }),
        };
        Ok(Checkpoint {
            model,
            config: file.config,
            variant: file.variant,
        })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
