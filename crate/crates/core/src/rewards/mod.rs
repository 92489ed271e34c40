//! The reward stack: intra-sample response consistency, cross-sample
//! preference rewards, and their aggregation into group-relative advantages.

pub mod aggregate;
pub mod preference;
pub mod response;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("at least 3 valid generations are required, got {0}")]
    TooFewGenerations(usize),
    #[error("at least 3 samples are required for triplet rewards, got {0}")]
    BatchTooSmall(usize),
    #[error("sample {sample} has no generation at rank {rank}")]
    RankUnavailable { sample: usize, rank: usize },
    #[error("sample `{0}` has no valid generation")]
    NoValidGenerations(String),
    #[error("generation {0} is out of range or malformed")]
    InvalidGeneration(usize),
    #[error("dimension {dim} is out of range for {dims}-dimensional scores")]
    DimOutOfRange { dim: usize, dims: usize },
    #[error("sample {0} is out of range")]
    SampleOutOfRange(usize),
    #[error("expected {expected} ground-truth values, got {got}")]
    GroundTruthMismatch { expected: usize, got: usize },
}
