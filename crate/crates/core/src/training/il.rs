//! Cross-entropy fine-tuning: the captioner on (raster, caption) pairs and
//! the action model on (caption, previous action) -> next step, with the
//! captioner frozen.

use super::{
    ce_loss_on_tape, CaptionSource, TrainConfig, TrainError, CE_CONVERGENCE_DELTA, EpochLog,
};
use crate::actiondsl::ActionStep;
use crate::langtext::{Caption, DEFAULT_MAX_CAPTION};
use crate::models::{ApmInput, ApmModel, Coupling, SumModel};
use crate::neuralcore::{DecodeConfig, DecodeMode, Mode, Optimizer, Tape, Tensor};
use crate::worldsim::{mix_seed, Raster};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// One captioner training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SumExample {
    pub raster: Raster,
    pub caption: Caption,
}

/// One action-model training step.
#[derive(Debug, Clone, PartialEq)]
pub struct ApmExample {
    pub raster: Raster,
    pub caption: Caption,
    pub task_text: String,
    pub prev_action: Option<ActionStep>,
    pub expert_action: ActionStep,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ (epoch as u64) << 1));
    order.shuffle(&mut rng);
    order
}

/// Epochs x batches of teacher-forced cross-entropy on the captioner.
/// Stops early once the epoch mean loss moves less than the convergence
/// delta. Returns the per-epoch loss curve.
pub fn finetune_sum(
    model: &mut SumModel,
    dataset: &[SumExample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, &model.store);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed ^ 0xd0));
    let mut curve = Vec::new();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let order = epoch_order(dataset.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            model.store.zero_grads();
            let mut tape = Tape::new();
            let mut batch_loss = None;
            for &i in chunk {
                let example = &dataset[i];
                let prefix = &example.caption.tokens[..example.caption.tokens.len() - 1];
                let targets = &example.caption.tokens[1..];
                let mut mode = Mode::Train {
                    rng: &mut dropout_rng,
                    dropout_rate: model.cfg.dropout_rate,
                };
                let lp = model.forward_logprobs(&mut tape, &example.raster, prefix, &mut mode)?;
                let ce = ce_loss_on_tape(&mut tape, lp, targets)?;
                batch_loss = Some(match batch_loss {
                    None => ce,
                    Some(acc) => tape.add(acc, ce),
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = tape.scale(total, 1.0 / chunk.len() as f64);
            loss_sum += tape.value(mean).item();
            batches += 1;
            tape.backward(mean, &mut model.store).expect("fresh tape");
            optimizer.step(&mut model.store);
        }
        let loss = loss_sum / batches as f64;
        curve.push(EpochLog {
            epoch,
            loss,
            mean_reward: 0.0,
            execution_rate: 0.0,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        if epoch > 0 && (curve[epoch - 1].loss - loss).abs() < CE_CONVERGENCE_DELTA {
            break;
        }
    }
    Ok(curve)
}

/// Resolves the caption (and hidden states, for hidden coupling) each APM
/// example conditions on. The captioner is frozen, so this is computed
/// once up front.
fn conditioning(
    apm: &ApmModel,
    sum: &SumModel,
    dataset: &[ApmExample],
    source: CaptionSource,
) -> Result<Vec<(Caption, Option<Tensor>)>, TrainError> {
    let greedy = DecodeConfig {
        mode: DecodeMode::Greedy,
        max_len: DEFAULT_MAX_CAPTION.min(sum.cfg.max_seq.saturating_sub(1)),
        seed: 0,
    };
    dataset
        .iter()
        .map(|ex| {
            let caption = match source {
                CaptionSource::Oracle => ex.caption.clone(),
                CaptionSource::SumGreedy => sum.sum_caption(&ex.raster, &greedy)?.0,
            };
            let hidden = match apm.coupling {
                Coupling::Hidden => Some(sum.caption_hidden(&ex.raster, &caption)?),
                Coupling::Text => None,
            };
            Ok((caption, hidden))
        })
        .collect()
}

/// Imitation fine-tuning of the action model with the captioner frozen:
/// the caption comes from the captioner (or the oracle, per config), the
/// expert step is the teacher-forced target, and only APM parameters
/// update.
pub fn finetune_apm_il(
    apm: &mut ApmModel,
    sum: &SumModel,
    dataset: &[ApmExample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let conditioned = conditioning(apm, sum, dataset, cfg.caption_source)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, &apm.store);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed ^ 0xa1));
    let mut curve = Vec::new();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let order = epoch_order(dataset.len(), cfg.seed.wrapping_add(1), epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            apm.store.zero_grads();
            let mut tape = Tape::new();
            let mut batch_loss = None;
            for &i in chunk {
                let example = &dataset[i];
                let (caption, hidden) = &conditioned[i];
                let input = ApmInput {
                    task_text: Some(&example.task_text),
                    caption,
                    prev_action: example.prev_action.as_ref(),
                    caption_hidden: hidden.as_ref(),
                };
                let target_ids = apm.step_target_ids(&example.expert_action);
                let prefix = &target_ids[..target_ids.len() - 1];
                let targets = &target_ids[1..];
                let mut mode = Mode::Train {
                    rng: &mut dropout_rng,
                    dropout_rate: apm.cfg.dropout_rate,
                };
                let lp = apm.forward_logprobs(&mut tape, &input, prefix, &mut mode)?;
                let ce = ce_loss_on_tape(&mut tape, lp, targets)?;
                batch_loss = Some(match batch_loss {
                    None => ce,
                    Some(acc) => tape.add(acc, ce),
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = tape.scale(total, 1.0 / chunk.len() as f64);
            loss_sum += tape.value(mean).item();
            batches += 1;
            tape.backward(mean, &mut apm.store).expect("fresh tape");
            optimizer.step(&mut apm.store);
        }
        let loss = loss_sum / batches as f64;
        curve.push(EpochLog {
            epoch,
            loss,
            mean_reward: 0.0,
            execution_rate: 0.0,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        if epoch > 0 && (curve[epoch - 1].loss - loss).abs() < CE_CONVERGENCE_DELTA {
            break;
        }
    }
    Ok(curve)
}

/// Fraction of caption positions where the argmax under teacher forcing
/// equals the ground-truth token.
pub fn teacher_forced_accuracy(sum: &SumModel, dataset: &[SumExample]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in dataset {
        let prefix = &ex.caption.tokens[..ex.caption.tokens.len() - 1];
        let targets = &ex.caption.tokens[1..];
        let mut tape = Tape::new();
        let lp = sum
            .forward_logprobs(&mut tape, &ex.raster, prefix, &mut Mode::Eval)
            .expect("dataset rasters match the model view");
        let t = tape.value(lp);
        for (i, &y) in targets.iter().enumerate() {
            let mut best = 0;
            for c in 0..t.cols() {
                if t.at(i, c) > t.at(i, best) {
                    best = c;
                }
            }
            hits += (best as u32 == y) as usize;
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

/// Per-token accuracy of free-running greedy decode against the target,
/// position-aligned; missing or extra positions count as wrong.
pub fn free_running_accuracy(sum: &SumModel, dataset: &[SumExample]) -> f64 {
    let cfg = DecodeConfig {
        mode: DecodeMode::Greedy,
        max_len: DEFAULT_MAX_CAPTION.min(sum.cfg.max_seq.saturating_sub(1)),
        seed: 0,
    };
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in dataset {
        let decoded = sum.sum_caption(&ex.raster, &cfg).expect("matching view").0;
        let targets = &ex.caption.tokens[1..];
        let got = &decoded.tokens[1..];
        for (i, &y) in targets.iter().enumerate() {
            hits += (got.get(i) == Some(&y)) as usize;
            total += 1;
        }
    }
    hits as f64 / total.max(1) as f64
}

/// Fraction of dataset captions the captioner reproduces exactly under
/// greedy decoding.
pub fn sum_exact_match_rate(sum: &SumModel, dataset: &[SumExample]) -> f64 {
    let cfg = DecodeConfig {
        mode: DecodeMode::Greedy,
        max_len: DEFAULT_MAX_CAPTION.min(sum.cfg.max_seq.saturating_sub(1)),
        seed: 0,
    };
    let hits = dataset
        .iter()
        .filter(|ex| sum.sum_caption(&ex.raster, &cfg).map(|(c, _)| c == ex.caption).unwrap_or(false))
        .count();
    hits as f64 / dataset.len().max(1) as f64
}

/// Fraction of expert steps the action model reproduces exactly under
/// greedy decoding, conditioning per the caption source.
pub fn apm_exact_match_rate(
    apm: &ApmModel,
    sum: &SumModel,
    dataset: &[ApmExample],
    source: CaptionSource,
) -> f64 {
    let conditioned = match conditioning(apm, sum, dataset, source) {
        Ok(c) => c,
        Err(_) => return 0.0,
    };
    let cfg = DecodeConfig { mode: DecodeMode::Greedy, max_len: 8, seed: 0 };
    let mut hits = 0usize;
    for (ex, (caption, hidden)) in dataset.iter().zip(&conditioned) {
        let input = ApmInput {
            task_text: Some(&ex.task_text),
            caption,
            prev_action: ex.prev_action.as_ref(),
            caption_hidden: hidden.as_ref(),
        };
        if let Ok((crate::models::DecodedAction::Step(step), _)) = apm.next_action(&input, &cfg) {
            hits += (step == ex.expert_action) as usize;
        }
    }
    hits as f64 / dataset.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langtext::{tokenize, OverlongPolicy, Vocab};
    use crate::neuralcore::ModelConfig;
    use crate::worldsim::{gen_layout, render, AgentState, View};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { d_model: 16, n_heads: 2, n_layers: 1, ffn_mult: 2, dropout_rate: 0.0, max_seq: 32 }
    }

    fn one_pair() -> (Vocab, Vec<SumExample>) {
        let text = "the agent stands near the closed fridge in the kitchen";
        let vocab = Vocab::from_corpus([text]);
        let world = gen_layout(1, 42).unwrap();
        let raster = render(&world, &AgentState::spawn(), View::Auto);
        let caption = tokenize(text, &vocab, 24, OverlongPolicy::Error).unwrap();
        (vocab, vec![SumExample { raster, caption }])
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let (vocab, data) = one_pair();
        let mut model = SumModel::new(tiny_cfg(), View::Auto, vocab, 1).unwrap();
        let before = model.store.content_hash();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let curve = finetune_sum(&mut model, &data, &cfg).unwrap();
        assert!(curve.is_empty());
        assert_eq!(model.store.content_hash(), before);
    }

    #[test]
    fn empty_dataset_rejected() {
        let (vocab, _) = one_pair();
        let mut model = SumModel::new(tiny_cfg(), View::Auto, vocab, 1).unwrap();
        assert!(matches!(
            finetune_sum(&mut model, &[], &TrainConfig::default()),
            Err(TrainError::EmptyDataset)
        ));
    }

    #[test]
    fn single_pair_memorizes_to_exact_greedy_decode() {
        let (vocab, data) = one_pair();
        let mut model = SumModel::new(tiny_cfg(), View::Auto, vocab, 1).unwrap();
        let optimizer = crate::neuralcore::OptimizerConfig {
            learning_rate: 5e-3,
            ..Default::default()
        };
        let cfg = TrainConfig { epochs: 500, batch_size: 1, optimizer, ..Default::default() };
        let curve = finetune_sum(&mut model, &data, &cfg).unwrap();
        assert!(curve.last().unwrap().loss < 0.5, "loss curve: {:?}", curve.last());
        assert_eq!(sum_exact_match_rate(&model, &data), 1.0);
        assert_eq!(teacher_forced_accuracy(&model, &data), 1.0);
    }

    #[test]
    fn identical_seeds_identical_checkpoints() {
        let (vocab, data) = one_pair();
        let run = || {
            let mut model = SumModel::new(tiny_cfg(), View::Auto, vocab.clone(), 1).unwrap();
            let cfg = TrainConfig { epochs: 3, batch_size: 1, seed: 9, ..Default::default() };
            finetune_sum(&mut model, &data, &cfg).unwrap();
            model.store.content_hash()
        };
        assert_eq!(run(), run());
    }
}
