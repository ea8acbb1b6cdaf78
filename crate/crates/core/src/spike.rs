//! Event-domain samples and datasets, binning into dense grids, and the
//! `.sea.ndjson` interchange format.
//!
//! The format is one header line followed by one line per sample:
//!
//! ```text
//! {"num_neurons":N,"num_classes":C,"variant":"whole","transform_log":[...]}
//! {"label":l,"duration_ms":T,"neurons":[[t,...],...]}
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One labelled recording: a sorted list of spike times (ms) per neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrainSample {
    label: usize,
    duration_ms: f64,
    neurons: Vec<Vec<f64>>,
}

impl SpikeTrainSample {
    /// Validates and builds a sample. Each neuron's list must be sorted and
    /// every time must lie in `[0, duration_ms)`.
    pub fn new(neurons: Vec<Vec<f64>>, label: usize, duration_ms: f64) -> Result<Self> {
        let sample = Self {
            label,
            duration_ms,
            neurons,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Sorts each neuron's list before validating.
    pub fn from_unsorted(mut neurons: Vec<Vec<f64>>, label: usize, duration_ms: f64) -> Result<Self> {
        for train in &mut neurons {
            train.sort_by(f64::total_cmp);
        }
        Self::new(neurons, label, duration_ms)
    }

    /// Builds a sample whose trains are already known to be valid.
    pub(crate) fn from_parts(neurons: Vec<Vec<f64>>, label: usize, duration_ms: f64) -> Self {
        let sample = Self {
            label,
            duration_ms,
            neurons,
        };
        debug_assert!(sample.validate().is_ok(), "{:?}", sample.validate());
        sample
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration_ms.is_finite() && self.duration_ms > 0.0) {
            return Err(Error::InvalidSample(format!(
                "duration_ms must be positive and finite, got {}",
                self.duration_ms
            )));
        }
        for (i, train) in self.neurons.iter().enumerate() {
            for (j, &t) in train.iter().enumerate() {
                if !t.is_finite() || t < 0.0 || t >= self.duration_ms {
                    return Err(Error::InvalidSample(format!(
                        "neuron {i}: spike time {t} outside [0, {})",
                        self.duration_ms
                    )));
                }
                if j > 0 && train[j - 1] > t {
                    return Err(Error::InvalidSample(format!("neuron {i}: times not sorted")));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }

    pub fn neurons(&self) -> &[Vec<f64>] {
        &self.neurons
    }

    pub fn num_neurons(&self) -> usize {
        self.neurons.len()
    }

    pub fn total_spikes(&self) -> usize {
        self.neurons.iter().map(Vec::len).sum()
    }

    pub fn into_neurons(self) -> Vec<Vec<f64>> {
        self.neurons
    }

    /// Keeps only the listed neurons, in the given order.
    pub fn select_neurons(&self, keep: &[usize]) -> Self {
        let neurons = keep.iter().map(|&i| self.neurons[i].clone()).collect();
        Self::from_parts(neurons, self.label, self.duration_ms)
    }
}

/// Per-neuron spike counts, computed from events.
pub fn spike_counts(sample: &SpikeTrainSample) -> Vec<usize> {
    sample.neurons.iter().map(Vec::len).collect()
}

/// How much rate information a dataset still carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Whole,
    Part,
    Norm,
    Synthetic,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Whole => "whole",
            Variant::Part => "part",
            Variant::Norm => "norm",
            Variant::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whole" => Ok(Variant::Whole),
            "part" => Ok(Variant::Part),
            "norm" => Ok(Variant::Norm),
            "synthetic" => Ok(Variant::Synthetic),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

/// One entry of a dataset's provenance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub op: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TransformRecord {
    pub fn new(op: impl Into<String>) -> Self {
        Self {
            op: op.into(),
            params: Map::new(),
            seed: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_owned(), value.into());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDataset {
    samples: Vec<SpikeTrainSample>,
    num_neurons: usize,
    num_classes: usize,
    variant: Variant,
    transform_log: Vec<TransformRecord>,
}

impl SpikeDataset {
    pub fn new(
        samples: Vec<SpikeTrainSample>,
        num_neurons: usize,
        num_classes: usize,
        variant: Variant,
        transform_log: Vec<TransformRecord>,
    ) -> Result<Self> {
        let ds = Self {
            samples,
            num_neurons,
            num_classes,
            variant,
            transform_log,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let duration = self.samples.first().map(SpikeTrainSample::duration_ms);
        for (m, s) in self.samples.iter().enumerate() {
            if s.num_neurons() != self.num_neurons {
                return Err(Error::Schema(format!(
                    "sample {m} has {} neurons, dataset declares {}",
                    s.num_neurons(),
                    self.num_neurons
                )));
            }
            if s.label() >= self.num_classes {
                return Err(Error::Schema(format!(
                    "sample {m} label {} not below num_classes {}",
                    s.label(),
                    self.num_classes
                )));
            }
            if Some(s.duration_ms()) != duration {
                return Err(Error::Schema(format!(
                    "sample {m} duration {} differs from {}",
                    s.duration_ms(),
                    duration.unwrap_or_default()
                )));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> &[SpikeTrainSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Shared sample duration; `None` for an empty dataset.
    pub fn duration_ms(&self) -> Option<f64> {
        self.samples.first().map(SpikeTrainSample::duration_ms)
    }

    pub fn transform_log(&self) -> &[TransformRecord] {
        &self.transform_log
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(SpikeTrainSample::label).collect()
    }

    /// Number of samples per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes];
        for s in &self.samples {
            sizes[s.label()] += 1;
        }
        sizes
    }

    /// Replaces the samples, keeping metadata and appending `record`.
    /// Neuron count and variant may change with the transform.
    pub fn derive(
        &self,
        samples: Vec<SpikeTrainSample>,
        num_neurons: usize,
        variant: Variant,
        record: TransformRecord,
    ) -> Result<Self> {
        let mut log = self.transform_log.clone();
        log.push(record);
        Self::new(samples, num_neurons, self.num_classes, variant, log)
    }

    /// Bins every sample; grid `origin` is the sample index.
    pub fn bin(&self, dt_ms: f64) -> Result<Vec<DenseSpikeGrid>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(m, s)| bin_sample(s, dt_ms).map(|g| g.with_origin(m)))
            .collect()
    }
}

/// Binary neuron × timestep raster.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpikeGrid {
    bits: Vec<bool>,
    num_neurons: usize,
    num_steps: usize,
    dt_ms: f64,
    origin: Option<usize>,
}

impl DenseSpikeGrid {
    pub fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn origin(&self) -> Option<usize> {
        self.origin
    }

    pub fn with_origin(mut self, origin: usize) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn get(&self, neuron: usize, step: usize) -> bool {
        self.bits[neuron * self.num_steps + step]
    }

    pub fn row(&self, neuron: usize) -> &[bool] {
        &self.bits[neuron * self.num_steps..(neuron + 1) * self.num_steps]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Neurons active at each step, in neuron order.
    pub fn active_by_step(&self) -> Vec<Vec<usize>> {
        let mut active = vec![Vec::new(); self.num_steps];
        for i in 0..self.num_neurons {
            for (k, &b) in self.row(i).iter().enumerate() {
                if b {
                    active[k].push(i);
                }
            }
        }
        active
    }
}

/// Number of bins covering `duration_ms` at width `dt_ms`.
pub fn num_steps(duration_ms: f64, dt_ms: f64) -> usize {
    let steps = duration_ms / dt_ms;
    // 1000 / 10 must give 100, not 101 from rounding noise
    let rounded = steps.round();
    if (steps - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        steps.ceil() as usize
    }
}

/// Discretizes a sample: bit `(i, k)` is set iff neuron `i` spikes in
/// `[k·dt, (k+1)·dt)`. Several spikes in one bin collapse to a single 1.
pub fn bin_sample(sample: &SpikeTrainSample, dt_ms: f64) -> Result<DenseSpikeGrid> {
    if !(dt_ms.is_finite() && dt_ms > 0.0) {
        return Err(Error::InvalidArgument(format!("dt_ms must be positive, got {dt_ms}")));
    }
    let n = sample.num_neurons();
    let steps = num_steps(sample.duration_ms(), dt_ms);
    let mut bits = vec![false; n * steps];
    for (i, train) in sample.neurons().iter().enumerate() {
        for &t in train {
            let k = ((t / dt_ms).floor() as usize).min(steps - 1);
            bits[i * steps + k] = true;
        }
    }
    Ok(DenseSpikeGrid {
        bits,
        num_neurons: n,
        num_steps: steps,
        dt_ms,
        origin: None,
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    num_neurons: usize,
    num_classes: usize,
    variant: Variant,
    transform_log: Vec<TransformRecord>,
}

/// Writes the header line and one line per sample.
pub fn write_ndjson<W: Write>(dataset: &SpikeDataset, mut sink: W) -> Result<()> {
    let header = Header {
        num_neurons: dataset.num_neurons,
        num_classes: dataset.num_classes,
        variant: dataset.variant,
        transform_log: dataset.transform_log.clone(),
    };
    serde_json::to_writer(&mut sink, &header)?;
    sink.write_all(b"\n")?;
    for s in &dataset.samples {
        serde_json::to_writer(&mut sink, s)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_ndjson<R: BufRead>(source: R) -> Result<SpikeDataset> {
    let mut header: Option<Header> = None;
    let mut samples = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: lineno,
            message: e.to_string(),
        };
        match &header {
            None => header = Some(serde_json::from_str(&line).map_err(parse_err)?),
            Some(h) => {
                let raw: SpikeTrainSample = serde_json::from_str(&line).map_err(parse_err)?;
                if raw.num_neurons() != h.num_neurons {
                    return Err(Error::Schema(format!(
                        "line {lineno}: {} neurons, header declares {}",
                        raw.num_neurons(),
                        h.num_neurons
                    )));
                }
                let sample = SpikeTrainSample::new(raw.neurons, raw.label, raw.duration_ms)
                    .map_err(|e| Error::Parse {
                        line: lineno,
                        message: e.to_string(),
                    })?;
                samples.push(sample);
            }
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    SpikeDataset::new(
        samples,
        header.num_neurons,
        header.num_classes,
        header.variant,
        header.transform_log,
    )
}

/// Writes atomically: a temporary sibling is renamed over `path`.
pub fn save(dataset: &SpikeDataset, path: &std::path::Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        write_ndjson(dataset, std::io::BufWriter::new(file))?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<SpikeDataset> {
    let file = std::fs::File::open(path)?;
    read_ndjson(std::io::BufReader::new(file))
}
