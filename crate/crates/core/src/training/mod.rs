//! Offline training on linear-elastic stiffness data.

mod grad;

pub use grad::{grad_loss, loss, loss_and_grad, mean_relative_error, relative_errors, LossGrad};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TrainingSample};
use crate::error::{Error, Result};
use crate::network::{Model, ModelType, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Regularization strength.
    pub eta: f64,
    /// Target sum of base-node activations.
    pub xi: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { eta: 1.0, xi: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be ≥ 0".into()));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::Config("xi must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_factor: f64,
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_size: 40,
            initial_lr: 1e-2,
            lr_factor: 0.8,
            patience: 50,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be ≥ 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("lr factor must be in (0, 1]");
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must be in (0, 1)");
        }
        Ok(())
    }
}

/// Bias-corrected Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) {
    state.update(params, grad, lr);
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved for `patience` consecutive epochs, then restarts the count.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self { lr, factor, patience, best: f64::INFINITY, stale: 0 }
    }

    /// Records one epoch's validation loss; returns `true` if the rate dropped.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.lr *= self.factor;
            self.stale = 0;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Running `e_C` over the epoch's mini-batches.
    pub train_e_c: Vec<f64>,
    pub val_e_c: Vec<f64>,
    /// Learning rate used during the epoch.
    pub lr: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: Model,
    pub last: Model,
    pub best_epoch: usize,
    pub history: TrainHistory,
    pub initial_val_e_c: f64,
}

/// If every activation is non-positive, resets the largest one to `1/2^N`.
pub fn revive_dead_network(model: &mut Model) -> bool {
    let nb = model.topology().num_base();
    let z = model.z_mut();
    if z.iter().any(|v| *v > 0.0) {
        return false;
    }
    let (imax, _) =
        z.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    z[imax] = 1.0 / nb as f64;
    true
}

/// Seeded initialization followed by [`train_from`]. The trailing
/// `validation_fraction` of the dataset is held out.
pub fn train(
    model_type: ModelType,
    topology: Topology,
    dataset: &Dataset,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Model::random(model_type, topology, &mut rng);
    let (train_set, val_set) = dataset.split_validation(cfg.validation_fraction);
    train_from(init, &train_set, &val_set, cfg, loss_cfg)
}

/// Trains from the given parameters. Mini-batch order in epoch `e` comes from
/// stream `e + 1` of a ChaCha generator keyed by `cfg.seed`.
pub fn train_from(
    init: Model,
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut model = init;
    let mut flat = model.to_flat();
    let mut adam = AdamState::new(flat.len());
    let mut sched = PlateauScheduler::new(cfg.initial_lr, cfg.lr_factor, cfg.patience);
    let mut history = TrainHistory::default();
    let initial_val_e_c = mean_relative_error(&model, val_set)?;

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let lr = sched.lr;
        let mut loss_sum = 0.0;
        let mut rel_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_set[i]));
            let lg = loss_and_grad(&model, &batch, loss_cfg)?;
            if !lg.loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_sum += lg.loss * batch.len() as f64;
            rel_sum += lg.sum_rel_err;
            adam.update(&mut flat, &lg.grad, lr);
            model.set_flat(&flat);
            if revive_dead_network(&mut model) {
                flat = model.to_flat();
            }
        }

        let val_loss = loss(&model, val_set, loss_cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let n = train_set.len() as f64;
        history.train_loss.push(loss_sum / n);
        history.train_e_c.push(rel_sum / n);
        history.val_loss.push(val_loss);
        history.val_e_c.push(mean_relative_error(&model, val_set)?);
        history.lr.push(lr);

        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            best_epoch = epoch;
        }
        sched.observe(val_loss);
    }

    Ok(TrainOutcome { best, last: model, best_epoch, history, initial_val_e_c })
}
