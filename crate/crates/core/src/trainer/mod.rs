//! End-to-end fine-tuning with AdaDelta, minibatches of whole utterances and
//! early stopping on validation loss.

mod adadelta;
mod fit;

pub use adadelta::{adadelta_step, adadelta_update, AdaDeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
pub use fit::{
    batch_gradient, evaluate, fit, make_batches, predict, train_epoch, EarlyStopping, EpochRecord, ModelCheckpoint,
    StopDecision, Subset, TrainConfig, TrainingMeta, MIN_IMPROVEMENT,
};
