use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::matrix::Matrix;
use crate::network::Network;
use crate::optim::{Adam, AdamConfig};

/// Optimisation and early-stopping schedule.
///
/// The validation loss is evaluated every `check_interval` updates. A check
/// without improvement multiplies the learning rate by `lr_decay`; training
/// stops once `patience` updates have passed since the last improvement, or
/// after `max_steps` updates. The best validated parameters are restored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub batch: usize,
    pub check_interval: usize,
    pub patience: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-4,
            lr_decay: 0.8,
            batch: 10,
            check_interval: 100,
            patience: 300,
            max_steps: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(NnError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(NnError::Config(format!(
                "lr_decay must lie in (0, 1), got {}",
                self.lr_decay
            )));
        }
        if self.batch == 0 || self.check_interval == 0 {
            return Err(NnError::Config("batch and check_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Summed loss over the valid frames of one example, with the gradient of
/// that sum with respect to the network output.
#[derive(Clone, Debug)]
pub struct FrameLoss {
    pub sum: f64,
    pub frames: usize,
    pub grad: Matrix,
}

/// Connects a dataset example to the network input and a training criterion.
pub trait Objective {
    type Example;

    fn input<'a>(&self, example: &'a Self::Example) -> &'a Matrix;

    fn loss_and_grad(&self, example: &Self::Example, output: &Matrix) -> Result<FrameLoss>;

    fn loss(&self, example: &Self::Example, output: &Matrix) -> Result<(f64, usize)> {
        let l = self.loss_and_grad(example, output)?;
        Ok((l.sum, l.frames))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_step: usize,
    pub steps: usize,
    pub early_stopped: bool,
    pub checks: Vec<CheckRecord>,
}

/// Mean per-frame loss of `net` (inference mode) over `data`.
pub fn evaluate<O: Objective>(net: &Network, objective: &O, data: &[O::Example]) -> Result<f64> {
    let mut sum = 0.0;
    let mut frames = 0usize;
    for ex in data {
        let out = net.forward(objective.input(ex))?;
        let (s, n) = objective.loss(ex, &out)?;
        sum += s;
        frames += n;
    }
    Ok(if frames == 0 { 0.0 } else { sum / frames as f64 })
}

/// Mini-batch ADAM training with validation-driven learning-rate decay and
/// early stopping. Deterministic for a fixed `config.seed`.
pub fn train<O: Objective>(
    net: &mut Network,
    objective: &O,
    train_set: &[O::Example],
    val_set: &[O::Example],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(AdamConfig::default());
    let mut lr = config.lr0;

    let initial = evaluate(net, objective, val_set)?;
    let mut best = initial;
    let mut best_step = 0;
    let mut best_params = net.parameter_values();
    let mut since_best = 0usize;
    let mut step = 0usize;
    let mut checks = Vec::new();
    let mut running = (0.0, 0usize);
    let mut early_stopped = false;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'outer: loop {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch) {
            net.zero_grad();
            let mut frames = 0usize;
            for &i in batch {
                let ex = &train_set[i];
                let (out, tape) = net.forward_train(objective.input(ex), &mut rng)?;
                let l = objective.loss_and_grad(ex, &out)?;
                net.backward(&tape, &l.grad)?;
                frames += l.frames;
                running.0 += l.sum;
                running.1 += l.frames;
            }
            if frames > 0 {
                let scale = 1.0 / frames as f64;
                let mut params = net.params_mut();
                for p in params.iter_mut() {
                    p.grad.iter_mut().for_each(|g| *g *= scale);
                }
                adam.step(&mut params, lr);
            }
            step += 1;
            since_best += 1;

            if step % config.check_interval == 0 {
                let val = evaluate(net, objective, val_set)?;
                if !val.is_finite() {
                    return Err(NnError::NonFinite(format!("validation loss at step {step}")));
                }
                let improved = val < best;
                if improved {
                    best = val;
                    best_step = step;
                    best_params = net.parameter_values();
                    since_best = 0;
                } else {
                    lr *= config.lr_decay;
                }
                let train_loss = if running.1 > 0 {
                    running.0 / running.1 as f64
                } else {
                    0.0
                };
                running = (0.0, 0);
                checks.push(CheckRecord {
                    step,
                    train_loss,
                    val_loss: val,
                    lr,
                    improved,
                });
                if since_best >= config.patience {
                    early_stopped = true;
                    break 'outer;
                }
            }
            if step >= config.max_steps {
                break 'outer;
            }
        }
    }
    net.load_parameter_values(&best_params)?;
    Ok(TrainHistory {
        initial_val_loss: initial,
        best_val_loss: best,
        best_step,
        steps: step,
        early_stopped,
        checks,
    })
}
