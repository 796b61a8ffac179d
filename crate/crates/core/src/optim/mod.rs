//! Adadelta, the early-stopping training loop, and the prediction pass.

mod adadelta;
mod dataset;
mod evaluate;
mod train;

pub use adadelta::{AdadeltaConfig, AdadeltaState};
pub use dataset::{load_batch, ExampleSet, InMemoryExample, InMemorySet};
pub use evaluate::{argmax, evaluate};
pub use train::{
    fit, EarlyStopping, EpochRecord, EpochStats, StopDecision, TrainConfig, TrainReport, Trainer,
};
