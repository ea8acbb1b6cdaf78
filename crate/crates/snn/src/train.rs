//! Mini-batch training loop and evaluation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sea_core::seed;

use crate::error::{Error, Result};
use crate::model::{Encoded, ParamKind, SnnModel};
use crate::optim::{Adam, AdamParams};
use crate::surrogate::SpikeFn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate for delays (ms); `None` uses `lr`.
    #[serde(default)]
    pub delay_lr: Option<f64>,
    #[serde(default)]
    pub adam: AdamParams,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            delay_lr: None,
            adam: AdamParams::default(),
            seed: 0,
            alpha: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.delay_lr.map_or(true, |v| v > 0.0)
            && self.alpha > 0.0
            && (0.0..1.0).contains(&self.adam.beta1)
            && (0.0..1.0).contains(&self.adam.beta2)
            && self.adam.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config: {self:?}")))
        }
    }

    /// Shuffled sample order for one epoch.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seed::rng(seed::derive(self.seed, &[seed::tag("shuffle"), epoch as u64])));
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_predictions(predicted: &[usize], labels: &[usize], classes: usize) -> Self {
        let mut confusion = vec![vec![0; classes]; classes];
        let mut hits = 0;
        for (&p, &l) in predicted.iter().zip(labels) {
            confusion[l][p] += 1;
            hits += usize::from(p == l);
        }
        let accuracy = if labels.is_empty() {
            0.0
        } else {
            hits as f64 / labels.len() as f64
        };
        Evaluation { accuracy, confusion }
    }
}

pub fn evaluate(model: &SnnModel, data: &[Encoded]) -> Result<Evaluation> {
    let c = model.num_classes();
    if let Some(x) = data.iter().find(|x| x.label >= c) {
        return Err(Error::InvalidArgument(format!("label {} out of range", x.label)));
    }
    let predicted: Vec<usize> = data.par_iter().map(|x| model.predict(x)).collect::<Result<_>>()?;
    let labels: Vec<usize> = data.iter().map(|x| x.label).collect();
    Ok(Evaluation::from_predictions(&predicted, &labels, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best test accuracy.
    pub model: SnnModel,
    pub best_epoch: usize,
    pub best_test_accuracy: f64,
    pub history: Vec<EpochMetrics>,
}

/// Trains with Adam on shuffled mini-batches and keeps the parameters that
/// scored best on `test` (first such epoch on ties).
pub fn train(mut model: SnnModel, train: &[Encoded], test: &[Encoded], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if let SpikeFn::Heaviside { .. } = model.spike {
        model.spike = SpikeFn::Heaviside { alpha: cfg.alpha };
    }
    let lrs: Vec<f64> = model
        .param_kinds()
        .into_iter()
        .map(|k| match k {
            ParamKind::Delay => cfg.delay_lr.unwrap_or(cfg.lr),
            _ => cfg.lr,
        })
        .collect();
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = Adam::new(cfg.adam, &shapes);
    let mut best = (model.clone(), 0, f64::NEG_INFINITY);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = cfg.epoch_order(epoch, train.len());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Encoded> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = model.batch_grad(&batch)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            opt.step(model.params_mut(), &grads, &lrs);
        }
        let acc = evaluate(&model, test)?.accuracy;
        history.push(EpochMetrics {
            epoch,
            train_loss: total / train.len() as f64,
            test_accuracy: acc,
        });
        if acc > best.2 {
            best = (model.clone(), epoch, acc);
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_test_accuracy: best.2,
        history,
    })
}
