//! Constrained multi-task loss, Nadam, early-stopped training and
//! repeated cross-validation.

mod cv;
mod loss;
mod nadam;
mod toy;
mod train;

pub use cv::{cross_validate, evaluate};
pub use loss::{multitask_loss, penalty_values, Loss, PenaltyValues, PenaltyVars, LOG_FLOOR};
pub use nadam::Nadam;
pub use toy::{toy_gradient_check, ToyDims, FD_STEP, MAX_TOY_EMBEDDING, MAX_TOY_LENGTH};
pub use train::{
    fit, train, validation_score, EpochRecord, StopReason, TrainConfig, TrainHistory, TrainOutcome, VocabOptions,
};
