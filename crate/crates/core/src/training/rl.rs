//! REINFORCE fine-tuning of the action model against the executability
//! reward, with self-critical and candidate-mean baselines.

use super::{
    ce_loss_on_tape, BaselineMode, CreditMode, EpochLog, TrainConfig, TrainError,
    RL_CONVERGENCE_DELTA, RL_MA_WINDOW,
};
use crate::langtext::BOS;
use crate::models::{ApmInput, ApmModel, Coupling, DecodedAction, Policy, SumModel, Trajectory};
use crate::neuralcore::{decode, DecodeConfig, DecodeMode, Mode, Optimizer, Tape, Tensor};
use crate::worldsim::{
    check_goal, env_reward, expert_plan, gen_layout, mix_seed, step, AgentState, RewardSpec,
    SceneGraph, Task,
};
use std::time::Instant;

/// One task instance: the layout and seed that build its world, plus the
/// goal itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RlTask {
    pub layout_id: u8,
    pub world_seed: u64,
    pub task: Task,
}

/// One candidate for the REINFORCE estimator: generated tokens (ending
/// with EOS unless cut at the length cap) and their reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RlSample {
    pub tokens: Vec<u32>,
    pub reward: f64,
}

/// Accumulates -(1/k) * sum_i (r_i - b) * grad log P(w_i) into the action
/// model's gradients. Candidates whose advantage is exactly zero
/// contribute nothing, so equal rewards with b = r leave the gradients
/// untouched.
pub fn reinforce_grad(
    apm: &mut ApmModel,
    input: &ApmInput,
    samples: &[RlSample],
    baseline: f64,
) -> Result<f64, TrainError> {
    let k = samples.len().max(1) as f64;
    let mut mean_nll = 0.0;
    for sample in samples {
        let mut prefix = Vec::with_capacity(sample.tokens.len() + 1);
        prefix.push(BOS);
        prefix.extend_from_slice(&sample.tokens[..sample.tokens.len().saturating_sub(1)]);

        let advantage = sample.reward - baseline;
        if advantage == 0.0 {
            continue;
        }
        let mut tape = Tape::new();
        let lp = apm.forward_logprobs(&mut tape, input, &prefix, &mut Mode::Eval)?;
        let nll = ce_loss_on_tape(&mut tape, lp, &sample.tokens)?;
        mean_nll += tape.value(nll).item() / k;
        let loss = tape.scale(nll, advantage / k);
        tape.backward(loss, &mut apm.store).expect("fresh tape");
    }
    Ok(mean_nll)
}

/// Reward for executing one candidate at a state: executability plus goal
/// bonus, plus the optional expert-match bonus.
fn candidate_reward(
    apm: &ApmModel,
    tokens: &[u32],
    world: &SceneGraph,
    agent: &AgentState,
    task: &Task,
    reward: &RewardSpec,
    expert_next: Option<&crate::actiondsl::ActionStep>,
) -> f64 {
    match apm.parse_decoded(tokens) {
        DecodedAction::Step(action) => match step(world, agent, &action) {
            Ok((w, a)) => {
                let mut r = env_reward(true, check_goal(&w, &a, task), reward);
                if expert_next == Some(&action) {
                    r += 1.0;
                }
                r
            }
            Err(_) => env_reward(false, false, reward),
        },
        _ => env_reward(false, false, reward),
    }
}

fn decode_tokens(apm: &ApmModel, input: &ApmInput, cfg: &DecodeConfig) -> Vec<u32> {
    let max_len = cfg.max_len.min(apm.cfg.max_seq.saturating_sub(1));
    let cfg = DecodeConfig { max_len, ..*cfg };
    let mut tape = Tape::new();
    let memory_var = apm.encode(&mut tape, input, &mut Mode::Eval).expect("valid input");
    let memory = tape.value(memory_var).clone();
    let step_fn = make_step_fn(apm, memory);
    decode(step_fn, &cfg, BOS, crate::langtext::EOS).remove(0).tokens
}

fn sample_candidates(apm: &ApmModel, input: &ApmInput, k: usize, cfg: &DecodeConfig, salt: u64) -> Vec<Vec<u32>> {
    let max_len = cfg.max_len.min(apm.cfg.max_seq.saturating_sub(1));
    let mut tape = Tape::new();
    let memory_var = apm.encode(&mut tape, input, &mut Mode::Eval).expect("valid input");
    let memory = tape.value(memory_var).clone();

    match cfg.mode {
        DecodeMode::Beam { k: width } => {
            let beam_cfg = DecodeConfig {
                mode: DecodeMode::Beam { k: width.max(k) },
                max_len,
                seed: cfg.seed,
            };
            let step_fn = make_step_fn(apm, memory);
            decode(step_fn, &beam_cfg, BOS, crate::langtext::EOS)
                .into_iter()
                .take(k)
                .map(|d| d.tokens)
                .collect()
        }
        _ => (0..k)
            .map(|j| {
                let cfg = DecodeConfig {
                    max_len,
                    seed: mix_seed(cfg.seed ^ salt.wrapping_add(j as u64)),
                    ..*cfg
                };
                let step_fn = make_step_fn(apm, memory.clone());
                decode(step_fn, &cfg, BOS, crate::langtext::EOS).remove(0).tokens
            })
            .collect(),
    }
}

fn make_step_fn(apm: &ApmModel, memory: Tensor) -> impl FnMut(&[u32]) -> Vec<f64> + '_ {
    move |prefix: &[u32]| {
        let mut tape = Tape::new();
        let mem = tape.leaf(memory.clone());
        let lp = apm
            .decode_step_logprobs(&mut tape, mem, prefix)
            .expect("prefix stays within max_seq");
        let t = tape.value(lp);
        let last = t.rows() - 1;
        (0..t.cols()).map(|c| t.at(last, c)).collect()
    }
}

/// Builds worlds and rolls the model policy over each task instance.
pub fn rollout_tasks(
    apm: &ApmModel,
    sum: &SumModel,
    tasks: &[RlTask],
    decode_cfg: &DecodeConfig,
    max_steps: usize,
    reward: &RewardSpec,
) -> Result<Vec<Trajectory>, TrainError> {
    tasks
        .iter()
        .map(|t| {
            let world = gen_layout(t.layout_id, t.world_seed)
                .map_err(|e| TrainError::ShapeMismatch(e.to_string()))?;
            let agent = AgentState::spawn();
            crate::models::rollout(
                Policy::Model(apm),
                sum,
                &world,
                &agent,
                &t.task,
                decode_cfg,
                max_steps,
                reward,
            )
            .map_err(TrainError::Model)
        })
        .collect()
}

struct StepInput {
    task_index: usize,
    task_text: String,
    caption: crate::langtext::Caption,
    caption_hidden: Option<Tensor>,
    prev_action: Option<crate::actiondsl::ActionStep>,
    world: SceneGraph,
    agent: AgentState,
    task: Task,
    /// Tokens the trajectory's own policy emitted, with the trajectory's
    /// discounted return (used in return-credit mode).
    own_tokens: Vec<u32>,
    own_return: f64,
}

/// REINFORCE fine-tuning per the per-step loop: collect trajectories with
/// sampled decoding, group step inputs by task, draw k candidates per
/// input, reward them by executability, and apply the policy gradient.
///
/// The captioner stays frozen throughout. Returns the per-epoch log
/// (mean trajectory reward and execution rate).
pub fn finetune_apm_rl(
    apm: &mut ApmModel,
    sum: &SumModel,
    tasks: &[RlTask],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if tasks.is_empty() {
        return Err(TrainError::EmptyTaskSet);
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, &apm.store);
    let mut logs: Vec<EpochLog> = Vec::new();
    let mut updates = 0usize;
    let mut reward_history: Vec<f64> = Vec::new();

    'epochs: for epoch in 0..cfg.epochs {
        let started = Instant::now();

        // collect one trajectory per task in this epoch's slice
        let per_epoch = cfg.batch_size.max(1).min(tasks.len());
        let offset = (epoch * per_epoch) % tasks.len();
        let slice: Vec<(usize, &RlTask)> = (0..per_epoch)
            .map(|i| {
                let idx = (offset + i) % tasks.len();
                (idx, &tasks[idx])
            })
            .collect();

        let mut trajectories = Vec::new();
        for (idx, rl_task) in &slice {
            let world = gen_layout(rl_task.layout_id, rl_task.world_seed)
                .map_err(|e| TrainError::ShapeMismatch(e.to_string()))?;
            let agent = AgentState::spawn();
            let decode_cfg = DecodeConfig {
                seed: mix_seed(cfg.seed ^ ((epoch as u64) << 24) ^ (*idx as u64)),
                ..cfg.rl_decode
            };
            let traj = crate::models::rollout(
                Policy::Model(apm),
                sum,
                &world,
                &agent,
                &rl_task.task,
                &decode_cfg,
                cfg.max_steps,
                &cfg.reward,
            )?;
            trajectories.push((*idx, traj));
        }

        let mean_reward = trajectories
            .iter()
            .map(|(_, t)| t.total_reward())
            .sum::<f64>()
            / trajectories.len() as f64;
        let predicted: usize = trajectories.iter().map(|(_, t)| t.predicted_steps()).sum();
        let executed: usize = trajectories.iter().map(|(_, t)| t.executed_steps()).sum();
        let execution_rate = executed as f64 / predicted.max(1) as f64;

        // flatten to step inputs, grouped by task id (stable sort)
        let mut inputs: Vec<StepInput> = Vec::new();
        for (task_index, traj) in &trajectories {
            let n = traj.steps.len();
            for (t, rec) in traj.steps.iter().enumerate() {
                let own_tokens = match &rec.decoded {
                    DecodedAction::Step(s) => apm.step_target_ids(s)[1..].to_vec(),
                    DecodedAction::Malformed { tokens } => {
                        let mut ids: Vec<u32> =
                            tokens.iter().map(|t| apm.output_vocab.id_or_unk(t)).collect();
                        ids.push(crate::langtext::EOS);
                        ids
                    }
                    DecodedAction::Stop => vec![crate::langtext::EOS],
                };
                let own_return = match cfg.credit {
                    CreditMode::PerStep => rec.reward,
                    CreditMode::DiscountedReturn { gamma } => traj.steps[t..n]
                        .iter()
                        .enumerate()
                        .map(|(dt, r)| gamma.powi(dt as i32) * r.reward)
                        .sum(),
                };
                let caption_hidden = match apm.coupling {
                    Coupling::Hidden => Some(sum.caption_hidden(&rec.raster, &rec.caption)?),
                    Coupling::Text => None,
                };
                inputs.push(StepInput {
                    task_index: *task_index,
                    task_text: traj.task.nl_description.clone(),
                    caption: rec.caption.clone(),
                    caption_hidden,
                    prev_action: rec.prev_action.clone(),
                    world: rec.world_before.clone(),
                    agent: rec.agent_before.clone(),
                    task: traj.task.clone(),
                    own_tokens,
                    own_return,
                });
            }
        }
        inputs.sort_by_key(|i| i.task_index);

        let mut epoch_nll = 0.0;
        let mut nll_count = 0usize;
        for chunk in inputs.chunks(cfg.batch_size.max(1)) {
            apm.store.zero_grads();
            for (j, input_rec) in chunk.iter().enumerate() {
                let input = ApmInput {
                    task_text: Some(&input_rec.task_text),
                    caption: &input_rec.caption,
                    prev_action: input_rec.prev_action.as_ref(),
                    caption_hidden: input_rec.caption_hidden.as_ref(),
                };
                let expert_next = if cfg.match_expert_bonus > 0.0 {
                    expert_plan(&input_rec.world, &input_rec.agent, &input_rec.task)
                        .ok()
                        .and_then(|p| p.steps.into_iter().next())
                } else {
                    None
                };

                let samples: Vec<RlSample> = match cfg.credit {
                    CreditMode::PerStep => {
                        let salt = ((updates as u64) << 20) ^ (j as u64);
                        sample_candidates(apm, &input, cfg.k.max(1), &cfg.rl_decode, salt)
                            .into_iter()
                            .map(|tokens| {
                                let reward = candidate_reward(
                                    apm,
                                    &tokens,
                                    &input_rec.world,
                                    &input_rec.agent,
                                    &input_rec.task,
                                    &cfg.reward,
                                    expert_next.as_ref(),
                                );
                                RlSample { tokens, reward }
                            })
                            .collect()
                    }
                    CreditMode::DiscountedReturn { .. } => vec![RlSample {
                        tokens: input_rec.own_tokens.clone(),
                        reward: input_rec.own_return,
                    }],
                };

                let baseline = match cfg.baseline {
                    BaselineMode::None => 0.0,
                    BaselineMode::BeamMean => {
                        samples.iter().map(|s| s.reward).sum::<f64>() / samples.len().max(1) as f64
                    }
                    BaselineMode::GreedySelfCritical => {
                        let greedy_cfg = DecodeConfig {
                            mode: DecodeMode::Greedy,
                            ..cfg.rl_decode
                        };
                        let tokens = decode_tokens(apm, &input, &greedy_cfg);
                        candidate_reward(
                            apm,
                            &tokens,
                            &input_rec.world,
                            &input_rec.agent,
                            &input_rec.task,
                            &cfg.reward,
                            expert_next.as_ref(),
                        )
                    }
                };

                epoch_nll += reinforce_grad(apm, &input, &samples, baseline)?;
                nll_count += 1;
            }
            optimizer.step(&mut apm.store);
            updates += 1;
            if cfg.max_updates.is_some_and(|max| updates >= max) {
                logs.push(EpochLog {
                    epoch,
                    loss: epoch_nll / nll_count.max(1) as f64,
                    mean_reward,
                    execution_rate,
                    wall_secs: started.elapsed().as_secs_f64(),
                });
                break 'epochs;
            }
        }

        logs.push(EpochLog {
            epoch,
            loss: epoch_nll / nll_count.max(1) as f64,
            mean_reward,
            execution_rate,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        // reward moving-average convergence
        reward_history.push(mean_reward);
        if reward_history.len() > RL_MA_WINDOW {
            let ma = |end: usize| {
                reward_history[end - RL_MA_WINDOW..end].iter().sum::<f64>() / RL_MA_WINDOW as f64
            };
            let n = reward_history.len();
            if (ma(n) - ma(n - 1)).abs() < RL_CONVERGENCE_DELTA {
                break;
            }
        }
    }
    Ok(logs)
}
