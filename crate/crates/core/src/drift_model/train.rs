//! The minibatch training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::drift_model::mlp::{LossGradient, NeuralDrift};
use crate::drift_model::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::dynamics::TransitionDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{fill_normal, Streams};
use crate::schedules::Schedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of pairs used for training; the rest is the validation set.
    pub train_fraction: f64,
    /// Record the training loss every this many steps.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            epochs: 100,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            train_fraction: 0.9,
            log_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1]".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> u64 {
        n_train.div_ceil(self.batch_size) as u64
    }
}

/// A model together with its optimizer state; enough to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: NeuralDrift,
    pub opt: AdamW,
}

impl TrainState {
    pub fn new(model: NeuralDrift, cfg: &TrainConfig) -> Self {
        let opt = AdamW::new(
            AdamWConfig {
                weight_decay: cfg.weight_decay,
                ..Default::default()
            },
            model.n_params(),
        );
        Self { model, opt }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// `(step, minibatch loss)` every `log_every` steps.
    pub loss_log: Vec<(u64, f64)>,
    /// Mean minibatch loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Held-out loss per epoch, with draws fixed across epochs.
    pub val_loss: Vec<f64>,
    /// Parameter-gradient norm at every step.
    pub grad_norms: Vec<f64>,
}

/// Per-sample `(s, z)` draws for rows `0..n`, row `k` from stream `k`.
pub(crate) fn draws(streams: &Streams, n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = exec::map_range(n, |k| {
        let mut rng = streams.stream(k as u64);
        let s: f64 = rng.random();
        let mut z = vec![0.0; d];
        fill_normal(&mut rng, &mut z);
        (s, z)
    });
    let mut s = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * d);
    for (sk, zk) in rows {
        s.push(sk);
        z.extend(zk);
    }
    (s, z)
}

/// Monte-Carlo loss of `model` on `data` with draws from `streams`.
pub fn dataset_loss(model: &NeuralDrift, sched: &Schedule, data: &TransitionDataset, streams: &Streams) -> Result<f64> {
    let (s, z) = draws(streams, data.len(), data.dim);
    Ok(model.loss_gradient_rows(sched, &data.x0, &data.x1, &s, &z)?.loss)
}

/// Train from scratch.
pub fn train(
    model: NeuralDrift,
    data: &TransitionDataset,
    cfg: &TrainConfig,
    sched: &Schedule,
) -> Result<(NeuralDrift, TrainReport)> {
    let mut state = TrainState::new(model, cfg);
    let report = train_resume(&mut state, data, cfg, sched, |_, _| {})?;
    Ok((state.model, report))
}

/// Continue training `state` until `cfg.epochs` epochs are complete, starting
/// from the epoch implied by the optimizer step count. `on_epoch` is called
/// with the finished epoch index and the state after it.
pub fn train_resume(
    state: &mut TrainState,
    data: &TransitionDataset,
    cfg: &TrainConfig,
    sched: &Schedule,
    mut on_epoch: impl FnMut(usize, &TrainState),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if data.dim != crate::field::DriftField::dim(&state.model) {
        return Err(Error::Dimension {
            expected: crate::field::DriftField::dim(&state.model),
            got: data.dim,
        });
    }
    let (train_set, val_set) = data.split(cfg.train_fraction);
    let d = data.dim;
    let n = train_set.len();
    let per_epoch = cfg.steps_per_epoch(n);
    let total = per_epoch * cfg.epochs as u64;
    let root = Streams::new(cfg.seed, "train");
    let val_streams = Streams::new(cfg.seed, "validation");
    let mut report = TrainReport::default();
    let start_epoch = (state.opt.step / per_epoch.max(1)) as usize;

    for epoch in start_epoch..cfg.epochs {
        let epoch_streams = root.derive(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_streams.derive(u64::MAX).stream(0));
        let mut batch_losses = Vec::with_capacity(per_epoch as usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.subset(idx);
            // draws keyed by position within the epoch
            let (s, z) = draws(&epoch_streams.derive(b as u64), idx.len(), d);
            let lr = cosine_lr(cfg.learning_rate, state.opt.step, total);
            let LossGradient { loss, grad } = state.model.loss_gradient_rows(sched, &batch.x0, &batch.x1, &s, &z)?;
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !gnorm.is_finite() {
                return Err(Error::Diverged { step: state.opt.step, lr });
            }
            state.opt.update(state.model.params_mut(), &grad, lr)?;
            if state.opt.step % cfg.log_every as u64 == 0 {
                report.loss_log.push((state.opt.step, loss));
            }
            report.grad_norms.push(gnorm);
            batch_losses.push(loss);
        }
        report.epoch_loss.push(exec::pairwise_sum(&batch_losses) / batch_losses.len() as f64);
        if !val_set.is_empty() {
            report.val_loss.push(dataset_loss(&state.model, sched, &val_set, &val_streams)?);
        }
        on_epoch(epoch, state);
    }
    Ok(report)
}
