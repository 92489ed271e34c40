//! Desk-scale stand-in for a scoring model: a stochastic score policy, a
//! synthetic MOS dataset, and the end-to-end two-stage training loop.

pub mod dataset;
pub mod policy;
pub mod train;

use thiserror::Error;

use crate::grpo::GrpoError;
use crate::metrics::MetricError;
use crate::rewards::RewardError;
use crate::types::{ConfigError, TypeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub use dataset::{dataset_for_config, generate_dataset, GroundTruthMap, SyntheticDataset, SyntheticSample};
pub use policy::{sample_generations, PolicyShape, ToyAction, ToyPolicy};
pub use train::{run_training, RunReport, StepRecord};
