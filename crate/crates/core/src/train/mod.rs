//! Loss, optimizer, learning-rate schedules and the training loop.

pub mod optim;
pub mod schedule;
pub mod trainer;

pub use optim::{adam_step, AdamConfig, AdamState};
pub use schedule::LrSchedule;
pub use trainer::{
    train, train_with_observer, write_epoch_log, Control, EpochRecord, StopReason, TrainConfig, TrainOutcome,
};

use crate::tensor::{TensorError, Var};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Mean absolute error between equally shaped tensors on the tape.
pub fn l1_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "l1_loss",
            lhs: pred.shape(),
            rhs: target.shape(),
        }
        .into());
    }
    Ok(pred.sub(target)?.abs().mean())
}
