//! Timing perturbations. All operators act on event times, keep every spike
//! inside `[0, T)`, and draw from a per-sample stream keyed by
//! `(seed, sample index, operator tag)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;
use crate::spike::{SpikeDataset, SpikeTrainSample, TransformRecord};

/// Offset used when a clipped time would land exactly on the duration.
pub const CLIP_EPSILON_MS: f64 = 1e-6;

fn clip(t: f64, duration: f64) -> f64 {
    let t = t.clamp(0.0, duration);
    if t >= duration {
        duration - CLIP_EPSILON_MS
    } else {
        t
    }
}

fn sorted(mut train: Vec<f64>) -> Vec<f64> {
    train.sort_by(f64::total_cmp);
    train
}

fn rebuild(sample: &SpikeTrainSample, neurons: Vec<Vec<f64>>) -> SpikeTrainSample {
    SpikeTrainSample::from_parts(neurons, sample.label(), sample.duration_ms())
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    Ok(Normal::new(0.0, sigma).expect("valid sigma"))
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {v}")));
    }
    Ok(())
}

/// Replaces `⌊f·n⌋` uniformly chosen spikes of each neuron with fresh
/// uniform times on `[0, T)`.
pub fn random_replace(sample: &SpikeTrainSample, f: f64, seed: u64) -> Result<SpikeTrainSample> {
    unit_interval("f", f)?;
    let mut rng = seed::rng(seed);
    let duration = sample.duration_ms();
    let neurons = sample
        .neurons()
        .iter()
        .map(|train| {
            let n = train.len();
            let k = ((f * n as f64) + 1e-9).floor() as usize;
            let k = k.min(n);
            if k == 0 {
                return train.clone();
            }
            let mut removed = vec![false; n];
            for j in index::sample(&mut rng, n, k) {
                removed[j] = true;
            }
            let mut out: Vec<f64> = train
                .iter()
                .zip(&removed)
                .filter(|(_, &r)| !r)
                .map(|(&t, _)| t)
                .collect();
            out.extend((0..k).map(|_| rng.gen_range(0.0..duration)));
            sorted(out)
        })
        .collect();
    Ok(rebuild(sample, neurons))
}

/// Independent Gaussian offset per spike, clipped to the sample window.
pub fn jitter_per_spike(sample: &SpikeTrainSample, sigma: f64, seed: u64) -> Result<SpikeTrainSample> {
    let normal = gaussian(sigma)?;
    let mut rng = seed::rng(seed);
    let duration = sample.duration_ms();
    let neurons = sample
        .neurons()
        .iter()
        .map(|train| {
            sorted(
                train
                    .iter()
                    .map(|&t| clip(t + normal.sample(&mut rng), duration))
                    .collect(),
            )
        })
        .collect();
    Ok(rebuild(sample, neurons))
}

/// One Gaussian offset per neuron, shared by all of its spikes.
pub fn jitter_per_neuron(sample: &SpikeTrainSample, sigma: f64, seed: u64) -> Result<SpikeTrainSample> {
    let normal = gaussian(sigma)?;
    let mut rng = seed::rng(seed);
    let duration = sample.duration_ms();
    let neurons = sample
        .neurons()
        .iter()
        .map(|train| {
            let shift = normal.sample(&mut rng);
            sorted(train.iter().map(|&t| clip(t + shift, duration)).collect())
        })
        .collect();
    Ok(rebuild(sample, neurons))
}

/// Deletes each spike independently with probability `p`.
pub fn delete_spikes(sample: &SpikeTrainSample, p: f64, seed: u64) -> Result<SpikeTrainSample> {
    unit_interval("p_d", p)?;
    let mut rng = seed::rng(seed);
    let neurons = sample
        .neurons()
        .iter()
        .map(|train| train.iter().copied().filter(|_| !rng.gen_bool(p)).collect())
        .collect();
    Ok(rebuild(sample, neurons))
}

/// Mirrors every spike inside the global window `[t_start, t_end]` spanned by
/// all neurons: `t ↦ t_start + t_end − t`.
pub fn time_reverse(sample: &SpikeTrainSample) -> SpikeTrainSample {
    let all = sample.neurons().iter().flatten();
    let start = all.clone().copied().fold(f64::INFINITY, f64::min);
    let end = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !start.is_finite() {
        return sample.clone();
    }
    let duration = sample.duration_ms();
    let neurons = sample
        .neurons()
        .iter()
        .map(|train| {
            train
                .iter()
                .rev()
                // the mirrored time stays in [start, end] up to rounding
                .map(|&t| clip((start - t) + end, duration).clamp(start, end))
                .collect()
        })
        .collect();
    rebuild(sample, neurons)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbKind {
    Replace { f: f64 },
    JitterSpike { sigma: f64 },
    JitterNeuron { sigma: f64 },
    Delete { p: f64 },
    Reverse,
}

impl PerturbKind {
    pub fn tag(&self) -> &'static str {
        match self {
            PerturbKind::Replace { .. } => "replace",
            PerturbKind::JitterSpike { .. } => "jitter-spike",
            PerturbKind::JitterNeuron { .. } => "jitter-neuron",
            PerturbKind::Delete { .. } => "delete",
            PerturbKind::Reverse => "reverse",
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            PerturbKind::Replace { f } => Some(f),
            PerturbKind::JitterSpike { sigma } | PerturbKind::JitterNeuron { sigma } => Some(sigma),
            PerturbKind::Delete { p } => Some(p),
            PerturbKind::Reverse => None,
        }
    }

    /// Builds a kind from its tag and (for all but `reverse`) a parameter.
    pub fn parse(kind: &str, value: Option<f64>) -> Result<Self> {
        let need = |v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidArgument(format!("perturbation `{kind}` needs a parameter")))
        };
        let k = match kind {
            "replace" => PerturbKind::Replace { f: need(value)? },
            "jitter-spike" | "jitter_spike" => PerturbKind::JitterSpike { sigma: need(value)? },
            "jitter-neuron" | "jitter_neuron" => PerturbKind::JitterNeuron { sigma: need(value)? },
            "delete" => PerturbKind::Delete { p: need(value)? },
            "reverse" => PerturbKind::Reverse,
            other => return Err(Error::InvalidArgument(format!("unknown perturbation `{other}`"))),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbKind::Replace { f } => unit_interval("f", f),
            PerturbKind::Delete { p } => unit_interval("p_d", p),
            PerturbKind::JitterSpike { sigma } | PerturbKind::JitterNeuron { sigma } => {
                gaussian(sigma).map(|_| ())
            }
            PerturbKind::Reverse => Ok(()),
        }
    }

    pub fn apply_sample(&self, sample: &SpikeTrainSample, seed: u64) -> Result<SpikeTrainSample> {
        match *self {
            PerturbKind::Replace { f } => random_replace(sample, f, seed),
            PerturbKind::JitterSpike { sigma } => jitter_per_spike(sample, sigma, seed),
            PerturbKind::JitterNeuron { sigma } => jitter_per_neuron(sample, sigma, seed),
            PerturbKind::Delete { p } => delete_spikes(sample, p, seed),
            PerturbKind::Reverse => Ok(time_reverse(sample)),
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{}={v}", self.tag()),
            None => f.write_str(self.tag()),
        }
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    /// Accepts `reverse` or `kind=value`, e.g. `jitter-spike=25`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((k, v)) => {
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad parameter in `{s}`")))?;
                Self::parse(k.trim(), Some(v))
            }
            None => Self::parse(s.trim(), None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(kind: PerturbKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn sample_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, &[index as u64, seed::tag(self.kind.tag())])
    }
}

/// Perturbs every sample and appends the operation to the transform log.
pub fn apply(spec: &PerturbSpec, dataset: &SpikeDataset) -> Result<SpikeDataset> {
    spec.kind.validate()?;
    let samples = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(m, s)| spec.kind.apply_sample(s, spec.sample_seed(m)))
        .collect::<Result<Vec<_>>>()?;
    let mut record = TransformRecord::new(format!("perturb_{}", spec.kind.tag())).seed(spec.seed);
    if let Some(v) = spec.kind.value() {
        record = record.param("value", v);
    }
    dataset.derive(samples, dataset.num_neurons(), dataset.variant(), record)
}

/// Applies several perturbations in order.
pub fn apply_all(specs: &[PerturbSpec], dataset: &SpikeDataset) -> Result<SpikeDataset> {
    specs
        .iter()
        .try_fold(dataset.clone(), |ds, spec| apply(spec, &ds))
}
