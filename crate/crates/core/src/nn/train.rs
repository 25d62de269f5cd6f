//! Mini-batch ADAM training with a seeded train/validation split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::Activation;
use super::loss::{binary_accuracy, categorical_accuracy, cross_entropy_loss, mse_loss, Loss};
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of samples used for training; the rest validate.
    pub train_fraction: f64,
    pub loss: Loss,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            l2: 2e-6,
            batch_size: 3000,
            epochs: 700,
            train_fraction: 0.7,
            loss: Loss::Mse,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Binary accuracy for MSE detectors, categorical accuracy for the
    /// classifier.
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Per-sample loss and its gradient w.r.t. the output pre-activation,
/// both averaged over the batch.
pub fn loss_and_logit_grad(loss: Loss, act: Activation, y: &Tensor, out: &Tensor) -> Result<(f64, Tensor)> {
    let batch = y.rows().max(1) as f64;
    let (j, mut g) = match (loss, act) {
        (Loss::CrossEntropy, Activation::Softmax) => cross_entropy_loss(y, out)?,
        (Loss::CrossEntropy, _) => {
            return Err(Error::InvalidConfig("cross-entropy needs a softmax output layer".into()))
        }
        (Loss::Mse, Activation::Softmax) => {
            return Err(Error::InvalidConfig("MSE on a softmax output is not supported".into()))
        }
        (Loss::Mse, act) => {
            let (j, mut g) = mse_loss(y, out)?;
            // z <= 0 exactly where the ReLU output is 0, so the output stands in for z
            act.backward(out, out, &mut g)?;
            (j, g)
        }
    };
    g.data_mut().iter_mut().for_each(|v| *v /= batch);
    Ok((j / batch, g))
}

fn evaluate(net: &Network, loss: Loss, x: &Tensor, y: &Tensor, l2: f64) -> Result<(f64, f64)> {
    if x.rows() == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    let out = net.predict(x)?;
    let (j, _) = loss_and_logit_grad(loss, net.output_activation(), y, &out)?;
    let acc = match loss {
        Loss::Mse => binary_accuracy(y, &out, 0.5)?,
        Loss::CrossEntropy => categorical_accuracy(y, &out)?,
    };
    Ok((j + 0.5 * l2 * net.weight_norm_sq(), acc))
}

/// Trains `net` in place and leaves it holding the parameters of the
/// epoch with the lowest validation loss.
pub fn train(net: &mut Network, features: &Tensor, labels: &Tensor, cfg: &TrainConfig) -> Result<TrainReport> {
    let m = features.rows();
    if m == 0 || labels.rows() != m {
        return Err(Error::Shape(format!(
            "dataset has {m} feature rows and {} label rows",
            labels.rows()
        )));
    }
    if labels.cols() != net.output_width() {
        return Err(Error::LengthMismatch {
            what: "label width",
            expected: net.output_width(),
            got: labels.cols(),
        });
    }
    if features.cols() != net.input_width() {
        return Err(Error::LengthMismatch {
            what: "feature width",
            expected: net.input_width(),
            got: features.cols(),
        });
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction) || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(format!(
            "train fraction {} / batch size {}",
            cfg.train_fraction, cfg.batch_size
        )));
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let n_train = ((m as f64 * cfg.train_fraction).round() as usize).clamp(1, m);
    let val_indices = order.split_off(n_train);
    let mut train_indices = order;
    let batch_size = cfg.batch_size.min(n_train);

    let x_val = features.gather_rows(&val_indices);
    let y_val = labels.gather_rows(&val_indices);
    let act = net.output_activation();
    let adam = cfg.adam();
    let mut state = AdamState::new(net.params());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 0..cfg.epochs {
        train_indices.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut seen = 0usize;
        for (b, chunk) in train_indices.chunks(batch_size).enumerate() {
            let xb = features.gather_rows(chunk);
            let yb = labels.gather_rows(chunk);
            let trace = net.forward_train(&xb, &mut rng)?;
            let (j, g) = loss_and_logit_grad(cfg.loss, act, &yb, &trace.output)?;
            if !j.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = net.backward(&trace, g, cfg.l2)?;
            adam_step(&mut net.params_mut(), &grads, &mut state, &adam)?;
            sum += j * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = sum / seen as f64 + 0.5 * cfg.l2 * net.weight_norm_sq();
        let (val_loss, val_accuracy) = if val_indices.is_empty() {
            (train_loss, f64::NAN)
        } else {
            evaluate(net, cfg.loss, &x_val, &y_val, cfg.l2)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, net.clone()));
        }
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            *net = params;
            e
        }
        None => 0,
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        train_indices,
        val_indices,
    })
}
