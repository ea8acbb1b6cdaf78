//! Rate-only baseline: per-neuron spike counts → 128 ReLU → softmax.

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sea_core::{seed, spike_counts, SpikeDataset, SpikeTrainSample};

use crate::error::{Error, Result};
use crate::loss::softmax_cross_entropy;
use crate::optim::Adam;
use crate::train::{EpochMetrics, Evaluation, TrainConfig};

pub const HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// Training-set statistics used to standardize counts.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `inputs × hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden × outputs`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn counts(sample: &SpikeTrainSample) -> Vec<f64> {
    spike_counts(sample).into_iter().map(|c| c as f64).collect()
}

impl MlpModel {
    pub fn new(train: &SpikeDataset, seed: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let (n, h, c) = (train.num_neurons(), HIDDEN, train.num_classes());
        let rows: Vec<Vec<f64>> = train.samples().iter().map(counts).collect();
        let m = rows.len() as f64;
        let mean: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
        let std = (0..n)
            .map(|i| {
                let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / m;
                // constant features standardize to zero
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut rng = seed::rng(seed);
        let mut init = |fan_in: usize, len: usize| -> Vec<f64> {
            let k = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-k, k);
            (0..len).map(|_| u.sample(&mut rng)).collect()
        };
        Ok(MlpModel {
            inputs: n,
            hidden: h,
            outputs: c,
            mean,
            std,
            w1: init(n, n * h),
            b1: vec![0.0; h],
            w2: init(h, h * c),
            b2: vec![0.0; c],
        })
    }

    fn features(&self, sample: &SpikeTrainSample) -> Result<Vec<f64>> {
        if sample.num_neurons() != self.inputs {
            return Err(Error::InvalidArgument(format!(
                "input has {} neurons, model expects {}",
                sample.num_neurons(),
                self.inputs
            )));
        }
        Ok(counts(sample)
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        let mut a = self.b1.clone();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
                a.iter_mut().zip(row).for_each(|(o, w)| *o += v * w);
            }
        }
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        a
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.b2.clone();
        for (j, &v) in h.iter().enumerate() {
            if v != 0.0 {
                let row = &self.w2[j * self.outputs..(j + 1) * self.outputs];
                z.iter_mut().zip(row).for_each(|(o, w)| *o += v * w);
            }
        }
        z
    }

    pub fn predict(&self, sample: &SpikeTrainSample) -> Result<usize> {
        let z = self.logits(&self.hidden_act(&self.features(sample)?));
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        Ok(best)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }

    fn loss_and_grad(&self, sample: &SpikeTrainSample) -> Result<(f64, [Vec<f64>; 4])> {
        let x = self.features(sample)?;
        let h = self.hidden_act(&x);
        let (loss, dz) = softmax_cross_entropy(&self.logits(&h), sample.label());
        let (nh, c) = (self.hidden, self.outputs);
        let mut dw2 = vec![0.0; nh * c];
        let mut dh = vec![0.0; nh];
        for j in 0..nh {
            let row = &self.w2[j * c..(j + 1) * c];
            dh[j] = if h[j] > 0.0 { row.iter().zip(&dz).map(|(w, g)| w * g).sum() } else { 0.0 };
            for k in 0..c {
                dw2[j * c + k] = h[j] * dz[k];
            }
        }
        let mut dw1 = vec![0.0; self.inputs * nh];
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                dw1[i * nh..(i + 1) * nh].iter_mut().zip(&dh).for_each(|(d, g)| *d = v * g);
            }
        }
        Ok((loss, [dw1, dh, dw2, dz]))
    }

    pub fn evaluate(&self, data: &SpikeDataset) -> Result<Evaluation> {
        let predicted: Vec<usize> = data.samples().par_iter().map(|s| self.predict(s)).collect::<Result<_>>()?;
        Ok(Evaluation::from_predictions(&predicted, &data.labels(), self.outputs))
    }
}

#[derive(Debug, Clone)]
pub struct MlpOutcome {
    pub model: MlpModel,
    pub test_accuracy: f64,
    pub history: Vec<EpochMetrics>,
}

/// Trains the count baseline with the same optimizer and batching as the
/// spiking models; reports test accuracy of the final epoch.
pub fn mlp_count_baseline(train: &SpikeDataset, test: &SpikeDataset, cfg: &TrainConfig) -> Result<MlpOutcome> {
    cfg.validate()?;
    if train.num_neurons() != test.num_neurons() || train.num_classes() != test.num_classes() {
        return Err(Error::InvalidArgument("train and test shapes differ".into()));
    }
    let mut model = MlpModel::new(train, seed::derive(cfg.seed, &[seed::tag("mlp-init")]))?;
    let shapes = [model.w1.len(), model.b1.len(), model.w2.len(), model.b2.len()];
    let mut opt = Adam::new(cfg.adam, &shapes);
    let samples = train.samples();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = cfg.epoch_order(epoch, samples.len());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let per: Vec<(f64, [Vec<f64>; 4])> = chunk
                .par_iter()
                .map(|&i| model.loss_and_grad(&samples[i]))
                .collect::<Result<_>>()?;
            let mut acc: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
            let mut loss = 0.0;
            for (l, g) in per {
                loss += l;
                for (a, b) in acc.iter_mut().zip(g) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            let n = chunk.len() as f64;
            acc.iter_mut().flatten().for_each(|v| *v /= n);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss;
            opt.step(model.params_mut(), &acc, &[cfg.lr; 4]);
        }
        let test_accuracy = model.evaluate(test)?.accuracy;
        history.push(EpochMetrics {
            epoch,
            train_loss: total / samples.len() as f64,
            test_accuracy,
        });
    }
    let test_accuracy = history.last().map_or(0.0, |m| m.test_accuracy);
    Ok(MlpOutcome {
        model,
        test_accuracy,
        history,
    })
}
