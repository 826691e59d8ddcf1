//! Message-passing blocks, model assembly and the robot-node readout.
//!
//! Models are built from a [`ModelSpec`], usually through a [`Preset`].
//! [`Scorer`] is the read-only inference interface shared by evaluation and
//! heat-map sweeps.

mod checkpoint;
pub mod layers;
mod model;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointParam, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{
    assemble_model, BlockKind, BlockSpec, Dropout, Model, ModelSpec, Preset, PresetParams,
};

use crate::graph::{Graph, Variant};
use crate::numeric::TensorError;
use crate::training::{batch_graphs, BatchError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Frozen inference over graphs of one variant. Implementations must be safe
/// to call from several threads at once.
pub trait Scorer: Sync {
    fn variant(&self) -> Variant;

    /// One score in `[0, 1]` per graph, in input order.
    fn score_graphs(&self, graphs: &[&Graph]) -> Result<Vec<f64>, ModelError>;
}

impl Scorer for Model {
    fn variant(&self) -> Variant {
        Model::variant(self)
    }

    fn score_graphs(&self, graphs: &[&Graph]) -> Result<Vec<f64>, ModelError> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        self.score_batched(&batch_graphs(graphs)?)
    }
}

#[cfg(test)]
mod tests;
