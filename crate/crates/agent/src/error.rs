use thiserror::Error;

use mrav_autodiff::{AutodiffError, CheckpointError};
use mrav_core::{DatasetError, GeometryError, SamplingError, TaskError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("observation is {got:?}, the agent expects {expected:?}")]
    ImageShape {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("the demonstration sequence is empty")]
    EmptySequence,
    #[error("checkpoint does not describe this agent: {0}")]
    CheckpointMismatch(String),
}
