use super::optim::{adam_step, AdamConfig, AdamState};
use super::schedule::LrSchedule;
use super::{l1_loss, Result, TrainError};
use crate::data::{SampleSet, Scaler};
use crate::eval::{mae, predict_split};
use crate::model::StgcnModel;
use crate::tensor::{ParamStore, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn default_batch() -> usize {
    32
}

fn default_max_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    10
}

impl TrainConfig {
    /// lr 1e-3, weight decay 1e-3, cosine annealing.
    pub fn dublin() -> Self {
        Self {
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-3,
            schedule: LrSchedule::Cosine,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            adam: AdamConfig::default(),
        }
    }

    /// lr 1e-4, no weight decay, halving every 10 epochs.
    pub fn nyc() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.0,
            schedule: LrSchedule::step_default(),
            ..Self::dublin()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(TrainError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("weight decay must be non-negative".into()));
        }
        if let LrSchedule::Step { interval: 0, .. } = self.schedule {
            return Err(TrainError::Config("step schedule interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean L1 loss over training samples, in scaled units.
    pub train_loss: f64,
    /// Validation MAE in original units.
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    /// The epoch observer asked to stop.
    Requested,
    Diverged { epoch: usize, detail: String },
}

/// What the observer wants after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stop: StopReason,
    /// Optimizer state at the end of training.
    pub optimizer: AdamState,
}

/// Trains `model` in place, leaving it at the parameters with the lowest
/// validation MAE.
pub fn train(
    model: &mut StgcnModel,
    train_set: &SampleSet,
    val_set: &SampleSet,
    scaler: &Scaler,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(model, train_set, val_set, scaler, cfg, |_, _| Control::Continue)
}

/// [`train`] with a hook called after every epoch.
pub fn train_with_observer(
    model: &mut StgcnModel,
    train_set: &SampleSet,
    val_set: &SampleSet,
    scaler: &Scaler,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &StgcnModel) -> Control,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Config("training and validation splits must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train_set.indices();
    let mut state = AdamState::default();
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut since_best = 0usize;
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let lr = cfg.schedule.lr(epoch, cfg.lr, cfg.max_epochs)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let bound = model.params.bind(&tape, true);
            let x = tape.constant(train_set.inputs(batch));
            let y = tape.constant(train_set.targets(batch));
            let pred = model.forward(&tape, &bound, x)?;
            let loss = l1_loss(pred, y)?;
            let value = loss.value().data()[0];
            if !value.is_finite() {
                stop = StopReason::Diverged {
                    epoch,
                    detail: format!("training loss became {value}"),
                };
                break 'epochs;
            }
            let grads = loss.backward()?;
            model.params.load_grads(&bound, &grads);
            if let Err(e) = adam_step(&mut model.params, &mut state, &cfg.adam, lr, cfg.weight_decay) {
                stop = StopReason::Diverged {
                    epoch,
                    detail: e.to_string(),
                };
                break 'epochs;
            }
            loss_sum += value * batch.len() as f64;
        }
        model.params.zero_grads();
        let train_loss = loss_sum / order.len() as f64;
        let (pred, truth) = predict_split(model, val_set, scaler, cfg.batch_size)?;
        let val_mae = mae(&pred, &truth)?;
        if !val_mae.is_finite() {
            stop = StopReason::Diverged {
                epoch,
                detail: format!("validation MAE became {val_mae}"),
            };
            break;
        }
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_mae,
        };
        log::info!(
            "epoch {epoch:>3}  lr {lr:.2e}  train_loss {train_loss:.5}  val_mae {val_mae:.5}  ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        log.push(rec.clone());
        if best.as_ref().is_none_or(|b| val_mae < b.1) {
            best = Some((epoch, val_mae, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if observer(&rec, model) == Control::Stop {
            stop = StopReason::Requested;
            break;
        }
        if since_best >= cfg.patience {
            if epoch + 1 < cfg.max_epochs {
                stop = StopReason::EarlyStopped;
            }
            break;
        }
    }

    let Some((best_epoch, best_val_mae, params)) = best else {
        let detail = match &stop {
            StopReason::Diverged { detail, .. } => detail.clone(),
            _ => "no epoch completed".into(),
        };
        return Err(TrainError::Diverged(detail));
    };
    if let StopReason::Diverged { epoch, detail } = &stop {
        log::warn!("training diverged in epoch {epoch} ({detail}); keeping epoch {best_epoch}");
    }
    model.params = params;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val_mae,
        stop,
        optimizer: state,
    })
}

/// Writes the epoch log as CSV (`epoch,lr,train_loss,val_mae`).
pub fn write_epoch_log(log: &[EpochRecord], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()
}
