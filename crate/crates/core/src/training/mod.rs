//! The three fine-tuning procedures: captioner cross-entropy, action-model
//! imitation, and action-model REINFORCE against the executability reward.

mod il;
mod rl;

pub use il::{
    apm_exact_match_rate, finetune_apm_il, finetune_sum, free_running_accuracy,
    sum_exact_match_rate, teacher_forced_accuracy, ApmExample, SumExample,
};
pub use rl::{finetune_apm_rl, reinforce_grad, rollout_tasks, RlSample, RlTask};

use crate::langtext::PAD;
use crate::models::ModelError;
use crate::neuralcore::{DecodeConfig, DecodeMode, OptimizerConfig, Tape, Var};
use crate::worldsim::RewardSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The REINFORCE baseline b of the gradient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Reward of the greedily decoded sequence at the same input.
    #[default]
    GreedySelfCritical,
    /// Mean reward of the candidate set itself.
    BeamMean,
    /// No baseline (the literal per-step update rule).
    None,
}

/// Reward attribution across a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CreditMode {
    /// Immediate per-step reward on the step's own tokens.
    PerStep,
    /// Discounted return from the step onward (gamma = 1 sums the tail).
    DiscountedReturn { gamma: f64 },
}

impl Default for CreditMode {
    fn default() -> Self {
        CreditMode::PerStep
    }
}

/// Which caption the imitation fine-tuner conditions the action model on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    /// Greedy decode from the frozen captioner (the pipeline default).
    #[default]
    SumGreedy,
    /// The dataset's ground-truth caption.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    /// Decode settings for RL candidate sampling.
    pub rl_decode: DecodeConfig,
    /// Candidates drawn per input for the REINFORCE estimator.
    pub k: usize,
    pub reward: RewardSpec,
    pub baseline: BaselineMode,
    pub credit: CreditMode,
    pub caption_source: CaptionSource,
    /// Rollout length cap during RL collection.
    pub max_steps: usize,
    /// Stop RL after this many optimizer updates, when set.
    pub max_updates: Option<usize>,
    /// Extra reward when a candidate equals the expert's next step; 0
    /// disables the expert comparison entirely.
    pub match_expert_bonus: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 10,
            optimizer: OptimizerConfig::default(),
            rl_decode: DecodeConfig {
                mode: DecodeMode::Sample { temperature: 1.0 },
                max_len: 8,
                seed: 0,
            },
            k: 4,
            reward: RewardSpec::default(),
            baseline: BaselineMode::GreedySelfCritical,
            credit: CreditMode::PerStep,
            caption_source: CaptionSource::SumGreedy,
            max_steps: 12,
            max_updates: None,
            match_expert_bonus: 0.0,
            seed: 0,
        }
    }
}

/// One structured log record per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub execution_rate: f64,
    pub wall_secs: f64,
}

/// Epoch-mean-loss convergence threshold ("or convergence" for the
/// cross-entropy loops).
pub const CE_CONVERGENCE_DELTA: f64 = 1e-5;
/// Moving-average window and delta for RL reward convergence.
pub const RL_MA_WINDOW: usize = 10;
pub const RL_CONVERGENCE_DELTA: f64 = 1e-3;

/// Teacher-forced sequence negative log-likelihood on the tape:
/// -sum_i log P(y_i | y_{1:i-1}, X) over non-PAD positions.
///
/// Row i of `logprobs` conditions on the prefix up to position i, so it is
/// scored against `targets[i]`.
pub fn ce_loss_on_tape(tape: &mut Tape, logprobs: Var, targets: &[u32]) -> Result<Var, TrainError> {
    let t = tape.value(logprobs);
    if t.rows() < targets.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} logprob rows for {} targets",
            t.rows(),
            targets.len()
        )));
    }
    let cols = t.cols();
    let mut picks = Vec::with_capacity(targets.len());
    let mut weights = Vec::with_capacity(targets.len());
    for (i, &y) in targets.iter().enumerate() {
        if y == PAD {
            continue;
        }
        if (y as usize) >= cols {
            return Err(TrainError::ShapeMismatch(format!(
                "target id {y} outside vocab of {cols}"
            )));
        }
        picks.push((i, y as usize));
        weights.push(1.0);
    }
    Ok(tape.gather_nll(logprobs, &picks, &weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::Tensor;

    #[test]
    fn uniform_model_ce_is_length_times_log_vocab() {
        let mut tape = Tape::new();
        let vocab = 16;
        let len = 4;
        let uniform = (-(vocab as f64).ln()).to_owned();
        let lp = tape.leaf(Tensor::new(vec![len, vocab], vec![uniform; len * vocab]).unwrap());
        let targets = [7u32, 3, 15, 2];
        let loss = ce_loss_on_tape(&mut tape, lp, &targets).unwrap();
        let expected = 4.0 * (16f64).ln();
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn certain_model_has_zero_loss() {
        let mut tape = Tape::new();
        // log P = 0 for the target columns
        let mut data = vec![-50.0; 3 * 4];
        for (i, &t) in [1u32, 2, 3].iter().enumerate() {
            data[i * 4 + t as usize] = 0.0;
        }
        let lp = tape.leaf(Tensor::new(vec![3, 4], data).unwrap());
        let loss = ce_loss_on_tape(&mut tape, lp, &[1, 2, 3]).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn pad_positions_are_skipped_and_loss_nonnegative() {
        let mut tape = Tape::new();
        let uniform = -(4f64).ln();
        let lp = tape.leaf(Tensor::new(vec![4, 4], vec![uniform; 16]).unwrap());
        let loss = ce_loss_on_tape(&mut tape, lp, &[1, PAD, 2, PAD]).unwrap();
        let expected = 2.0 * (4f64).ln();
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
        assert!(tape.value(loss).item() >= 0.0);
    }

    #[test]
    fn too_many_targets_is_shape_mismatch() {
        let mut tape = Tape::new();
        let lp = tape.leaf(Tensor::new(vec![2, 4], vec![-1.0; 8]).unwrap());
        assert!(matches!(
            ce_loss_on_tape(&mut tape, lp, &[1, 2, 3]),
            Err(TrainError::ShapeMismatch(_))
        ));
    }

    /// Two-path consistency: the tape op equals direct indexing of the
    /// log-prob matrix.
    #[test]
    fn ce_matches_direct_indexing() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..12).map(|i| -((i % 5) as f64) - 0.5).collect();
        let tensor = Tensor::new(vec![3, 4], data).unwrap();
        let expected: f64 = [(0usize, 2usize), (1, 1), (2, 3)]
            .iter()
            .map(|&(r, c)| -tensor.at(r, c))
            .sum();
        let lp = tape.leaf(tensor);
        let loss = ce_loss_on_tape(&mut tape, lp, &[2, 1, 3]).unwrap();
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }
}
