//! Feed-forward spiking network: input → hidden LIF layers → readout, with
//! optional per-neuron delays on every hidden layer's output.

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sea_core::{bin_sample, seed, SpikeDataset, SpikeTrainSample};

use crate::delay::{apply_delay, apply_delay_backward};
use crate::error::{Error, Result};
use crate::layer::{Drive, LayerTrace, LifLayer};
use crate::loss::{final_potential_ce, spikemax};
use crate::surrogate::SpikeFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Non-spiking readout, cross-entropy on the last-step membranes.
    FinalPotentialCe,
    /// Spiking readout, cross-entropy on temperature-scaled spike counts.
    Spikemax { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub delays: bool,
    pub loss: LossKind,
    pub dt_ms: f64,
    /// Initial τ of the hidden layers.
    pub tau_ms: f64,
    /// Initial τ of the readout layer.
    pub readout_tau_ms: f64,
    pub learn_tau: bool,
    pub threshold: f64,
    /// Delays are drawn uniformly from `[0, delay_init_ms]`.
    pub delay_init_ms: f64,
    /// Multiplier on the `fan_in^{-1/2}` weight init bound.
    pub init_gain: f64,
}

impl Architecture {
    /// 10 → 100 LIF (learnable τ) → 2 leaky-integrator readout, dt = 1 ms.
    pub fn isi() -> Self {
        Architecture {
            inputs: 10,
            hidden: vec![100],
            outputs: 2,
            delays: false,
            loss: LossKind::FinalPotentialCe,
            dt_ms: 1.0,
            tau_ms: 20.0,
            readout_tau_ms: 1000.0,
            learn_tau: true,
            threshold: 1.0,
            delay_init_ms: 2.0,
            init_gain: 1.0,
        }
    }

    /// 60 → 3 LIF → 3 leaky-integrator readout, dt = 1 ms.
    pub fn coin() -> Self {
        Architecture {
            inputs: 60,
            hidden: vec![3],
            outputs: 3,
            readout_tau_ms: 100.0,
            ..Self::isi()
        }
    }

    /// inputs → 128 → 128 → classes, spiking readout, dt = 10 ms.
    pub fn shd(inputs: usize, classes: usize, delays: bool) -> Self {
        Architecture {
            inputs,
            hidden: vec![128, 128],
            outputs: classes,
            delays,
            loss: LossKind::Spikemax { temperature: 1.0 },
            dt_ms: 10.0,
            tau_ms: 20.0,
            readout_tau_ms: 20.0,
            learn_tau: false,
            threshold: 1.0,
            delay_init_ms: 2.0,
            init_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.inputs == 0 || self.outputs == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer sizes must be positive");
        }
        if !(self.dt_ms > 0.0 && self.tau_ms > 0.0 && self.readout_tau_ms > 0.0) {
            return bad("dt and tau must be positive");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        if !(self.delay_init_ms >= 0.0 && self.delay_init_ms.is_finite()) {
            return bad("delay init range must be finite and non-negative");
        }
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return bad("init gain must be positive");
        }
        if let LossKind::Spikemax { temperature } = self.loss {
            if !(temperature > 0.0) {
                return bad("spikemax temperature must be positive");
            }
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.inputs];
        d.extend(&self.hidden);
        d.push(self.outputs);
        d
    }
}

/// One binned sample: active input indices per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub active: Vec<Vec<usize>>,
    pub num_inputs: usize,
    pub label: usize,
}

impl Encoded {
    pub fn from_sample(sample: &SpikeTrainSample, dt_ms: f64) -> Result<Self> {
        let grid = bin_sample(sample, dt_ms)?;
        Ok(Encoded {
            active: grid.active_by_step(),
            num_inputs: sample.num_neurons(),
            label: sample.label(),
        })
    }

    pub fn from_dataset(dataset: &SpikeDataset, dt_ms: f64) -> Result<Vec<Self>> {
        dataset
            .samples()
            .par_iter()
            .map(|s| Self::from_sample(s, dt_ms))
            .collect()
    }

    pub fn steps(&self) -> usize {
        self.active.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weights,
    LogTau,
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnModel {
    pub arch: Architecture,
    pub layers: Vec<LifLayer>,
    /// One vector per hidden layer when delays are enabled, else empty.
    pub delays: Vec<Vec<f64>>,
    pub spike: SpikeFn,
}

/// Everything the backward pass needs from a forward pass.
pub struct Forward {
    pub traces: Vec<LayerTrace>,
    /// Dense inputs to layers `1..`, after delays.
    pub inputs: Vec<Vec<f64>>,
    pub steps: usize,
}

impl SnnModel {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed);
        let dims = arch.dims();
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let k = arch.init_gain / (w[0] as f64).sqrt();
                let u = Uniform::new_inclusive(-k, k);
                let readout = l == last;
                LifLayer {
                    n_in: w[0],
                    n_out: w[1],
                    weights: (0..w[0] * w[1]).map(|_| u.sample(&mut rng)).collect(),
                    log_tau: if readout { arch.readout_tau_ms } else { arch.tau_ms }.ln(),
                    learn_tau: arch.learn_tau,
                    threshold: arch.threshold,
                    spiking: !readout || matches!(arch.loss, LossKind::Spikemax { .. }),
                }
            })
            .collect();
        let delays = if arch.delays {
            let u = Uniform::new_inclusive(0.0, arch.delay_init_ms);
            arch.hidden
                .iter()
                .map(|&h| (0..h).map(|_| u.sample(&mut rng)).collect())
                .collect()
        } else {
            Vec::new()
        };
        Ok(SnnModel {
            arch,
            layers,
            delays,
            spike: SpikeFn::default(),
        })
    }

    pub fn with_spike_fn(mut self, spike: SpikeFn) -> Self {
        self.spike = spike;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.arch.outputs
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut k: Vec<ParamKind> = self
            .layers
            .iter()
            .flat_map(|_| [ParamKind::Weights, ParamKind::LogTau])
            .collect();
        k.extend(self.delays.iter().map(|_| ParamKind::Delay));
        k
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.weights);
            out.push(std::slice::from_ref(&l.log_tau));
        }
        out.extend(self.delays.iter().map(Vec::as_slice));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut() {
            let LifLayer { weights, log_tau, .. } = l;
            out.push(weights.as_mut_slice());
            out.push(std::slice::from_mut(log_tau));
        }
        out.extend(self.delays.iter_mut().map(Vec::as_mut_slice));
        out
    }

    /// Trainable scalars (τ counted only where learnable).
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + usize::from(l.learn_tau))
            .sum::<usize>()
            + self.delays.iter().map(Vec::len).sum::<usize>()
    }

    fn check(&self, x: &Encoded) -> Result<()> {
        if x.num_inputs != self.arch.inputs {
            return Err(Error::InvalidArgument(format!(
                "input has {} neurons, model expects {}",
                x.num_inputs, self.arch.inputs
            )));
        }
        if x.active.is_empty() {
            return Err(Error::InvalidArgument("input has no time steps".into()));
        }
        if x.active.iter().flatten().any(|&i| i >= self.arch.inputs) {
            return Err(Error::InvalidArgument("input index out of range".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Encoded) -> Result<Forward> {
        self.check(x)?;
        let steps = x.steps();
        let dt = self.arch.dt_ms;
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() - 1);
        for (l, layer) in self.layers.iter().enumerate() {
            let trace = if l == 0 {
                layer.forward(Drive::Sparse(&x.active), steps, dt, self.spike)
            } else {
                let prev = &traces[l - 1].s;
                let input = match self.delays.get(l - 1) {
                    Some(d) => apply_delay(prev, d, steps, dt),
                    None => prev.clone(),
                };
                let tr = layer.forward(Drive::Dense(&input), steps, dt, self.spike);
                inputs.push(input);
                tr
            };
            traces.push(trace);
        }
        Ok(Forward { traces, inputs, steps })
    }

    /// Readout statistic the loss acts on: final membranes or spike counts.
    pub fn readout(&self, fw: &Forward) -> Vec<f64> {
        let out = fw.traces.last().expect("at least one layer");
        let c = self.arch.outputs;
        match self.arch.loss {
            LossKind::FinalPotentialCe => out.u[(fw.steps - 1) * c..].to_vec(),
            LossKind::Spikemax { .. } => {
                let mut counts = vec![0.0; c];
                for row in out.s.chunks(c) {
                    counts.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                counts
            }
        }
    }

    /// Argmax of the readout statistic; spike-count ties go to the higher
    /// mean membrane, remaining ties to the lowest index.
    pub fn predict(&self, x: &Encoded) -> Result<usize> {
        let fw = self.forward(x)?;
        let z = self.readout(&fw);
        let c = self.arch.outputs;
        let key: Vec<(f64, f64)> = match self.arch.loss {
            LossKind::FinalPotentialCe => z.iter().map(|&v| (v, 0.0)).collect(),
            LossKind::Spikemax { .. } => {
                let u = &fw.traces.last().expect("layer").u;
                let mut mean = vec![0.0; c];
                for row in u.chunks(c) {
                    mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                z.iter().zip(mean).map(|(&n, m)| (n, m)).collect()
            }
        };
        let mut best = 0;
        for k in 1..c {
            if key[k].0 > key[best].0 || (key[k].0 == key[best].0 && key[k].1 > key[best].1) {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn loss(&self, z: &[f64], label: usize) -> (f64, Vec<f64>) {
        match self.arch.loss {
            LossKind::FinalPotentialCe => final_potential_ce(z, label),
            LossKind::Spikemax { temperature } => spikemax(z, label, temperature),
        }
    }

    /// Loss on one sample and its gradient, laid out like [`Self::params`].
    pub fn loss_and_grad(&self, x: &Encoded) -> Result<(f64, Vec<Vec<f64>>)> {
        if x.label >= self.arch.outputs {
            return Err(Error::InvalidArgument(format!("label {} out of range", x.label)));
        }
        let fw = self.forward(x)?;
        let z = self.readout(&fw);
        let (loss, dz) = self.loss(&z, x.label);
        Ok((loss, self.backward(x, &fw, &dz)))
    }

    pub fn backward(&self, x: &Encoded, fw: &Forward, dz: &[f64]) -> Vec<Vec<f64>> {
        let steps = fw.steps;
        let dt = self.arch.dt_ms;
        let c = self.arch.outputs;
        let n_layers = self.layers.len();
        let mut grad_u_out = None;
        let mut grad_s: Option<Vec<f64>> = None;
        match self.arch.loss {
            LossKind::FinalPotentialCe => {
                let mut g = vec![0.0; steps * c];
                g[(steps - 1) * c..].copy_from_slice(dz);
                grad_u_out = Some(g);
            }
            LossKind::Spikemax { .. } => {
                grad_s = Some(dz.iter().copied().cycle().take(steps * c).collect());
            }
        }
        let mut layer_grads = vec![(Vec::new(), 0.0); n_layers];
        let mut delay_grads = vec![Vec::new(); self.delays.len()];
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let drive = if l == 0 {
                Drive::Sparse(&x.active)
            } else {
                Drive::Dense(&fw.inputs[l - 1])
            };
            let gu = if l == n_layers - 1 { grad_u_out.as_deref() } else { None };
            let g = layer.backward(drive, &fw.traces[l], grad_s.as_deref(), gu, l > 0, steps, dt, self.spike);
            layer_grads[l] = (g.weights, g.log_tau);
            if let Some(dx) = g.input {
                grad_s = Some(match self.delays.get(l - 1) {
                    Some(d) => {
                        let (ds, dd) = apply_delay_backward(&fw.traces[l - 1].s, &dx, d, steps, dt);
                        delay_grads[l - 1] = dd;
                        ds
                    }
                    None => dx,
                });
            }
        }
        let mut out = Vec::with_capacity(2 * n_layers + delay_grads.len());
        for (w, t) in layer_grads {
            out.push(w);
            out.push(vec![t]);
        }
        out.extend(delay_grads);
        out
    }

    /// Mean loss and mean gradient over a batch. Per-sample work runs in
    /// parallel; the reduction is in index order, so the result does not
    /// depend on the thread count.
    pub fn batch_grad(&self, batch: &[&Encoded]) -> Result<(f64, Vec<Vec<f64>>)> {
        let per: Vec<(f64, Vec<Vec<f64>>)> = batch
            .par_iter()
            .map(|x| self.loss_and_grad(x))
            .collect::<Result<_>>()?;
        let n = batch.len().max(1) as f64;
        let mut loss = 0.0;
        let mut acc: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
        for (l, g) in per {
            loss += l;
            for (a, b) in acc.iter_mut().zip(g) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        for a in acc.iter_mut() {
            a.iter_mut().for_each(|v| *v /= n);
        }
        Ok((loss / n, acc))
    }
}
