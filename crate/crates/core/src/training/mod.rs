//! Batching, loss, the training loop with early stopping and random search.

mod batch;
mod search;
mod train;

pub use batch::{batch_graphs, BatchError, BatchedGraph};
pub use search::{random_search, sample_config, SearchOptions, SearchSpace, SessionResult};
pub use train::{
    mse, mse_loss, train, EarlyStopping, EpochOutcome, EpochRecord, TrainConfig, TrainError,
    TrainReport, Trainer, Verdict,
};
