//! The two sequence models and the episode loop that couples them: a
//! captioner from rasters to scene descriptions (SUM) and an action
//! decoder from descriptions to program steps (APM).

mod apm;
mod rollout;
mod sum;

pub use apm::{apm_input_vocab, program_vocab, ApmInput, ApmModel, Coupling, DecodedAction};
pub use rollout::{replay_consistent, rollout, Policy, TrajStep, Trajectory};
pub use sum::{SumModel, TILE_VOCAB};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}
