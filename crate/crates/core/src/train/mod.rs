//! Contrastive objective, RMSprop and the training loop.

mod loss;
mod rmsprop;
mod trainer;

pub use loss::{contrastive_loss, ContrastiveLossParams};
pub use rmsprop::Rmsprop;
pub use trainer::{
    train_step, EpochRecord, PairBatch, TrainConfig, TrainData, TrainHistory, TrainState, Trainer, LR_DECAY_FACTOR,
    OPT_PREFIX, TRAIN_KEY,
};
