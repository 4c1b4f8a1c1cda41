//! The render -> caption -> act -> step loop, recorded step by step.

use super::apm::{ApmInput, ApmModel, Coupling, DecodedAction};
use super::sum::SumModel;
use super::ModelError;
use crate::actiondsl::{ActionStep, Program};
use crate::langtext::{detokenize, Caption, DEFAULT_MAX_CAPTION};
use crate::neuralcore::{DecodeConfig, DecodeMode};
use crate::worldsim::{
    check_goal, env_reward, render, step, AgentState, Raster, RewardSpec, SceneGraph, Task,
};
use serde::{Deserialize, Serialize};

/// Where the next action comes from: the trained model, or a scripted
/// program (the oracle policy used by tests and dataset validation).
pub enum Policy<'a> {
    Model(&'a ApmModel),
    Scripted(&'a Program),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub raster: Raster,
    pub caption: Caption,
    pub caption_text: String,
    pub prev_action: Option<ActionStep>,
    pub decoded: DecodedAction,
    pub executed: bool,
    pub exec_error: Option<String>,
    pub goal_after: bool,
    pub reward: f64,
    pub world_before: SceneGraph,
    pub agent_before: AgentState,
}

/// One episode: the initial state, every step taken, and the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: Task,
    pub initial_world: SceneGraph,
    pub initial_agent: AgentState,
    pub steps: Vec<TrajStep>,
    pub goal_reached: bool,
}

impl Trajectory {
    /// Predicted steps: every decode that was not an immediate stop.
    pub fn predicted_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn executed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.executed).count()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Runs one episode. Captions are always greedy-decoded from the frozen
/// captioner; `decode_cfg` governs the action decode (its seed advances by
/// one per timestep so sampled steps differ). Stops at the goal, on an
/// immediate end-of-sequence action, or after `max_steps`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    policy: Policy,
    sum: &SumModel,
    world: &SceneGraph,
    agent: &AgentState,
    task: &Task,
    decode_cfg: &DecodeConfig,
    max_steps: usize,
    reward_spec: &RewardSpec,
) -> Result<Trajectory, ModelError> {
    if max_steps == 0 {
        return Err(ModelError::InvalidArg("max_steps must be at least 1".into()));
    }
    let caption_cfg = DecodeConfig {
        mode: DecodeMode::Greedy,
        max_len: DEFAULT_MAX_CAPTION.min(sum.cfg.max_seq.saturating_sub(1)),
        seed: 0,
    };

    let mut cur_world = world.clone();
    let mut cur_agent = agent.clone();
    let mut prev_action: Option<ActionStep> = None;
    let mut steps = Vec::new();
    let mut goal_reached = check_goal(&cur_world, &cur_agent, task);
    let mut scripted_index = 0usize;

    for t in 0..max_steps {
        if goal_reached {
            break;
        }
        let raster = render(&cur_world, &cur_agent, sum.view);
        let (caption, _) = sum.sum_caption(&raster, &caption_cfg)?;
        let caption_text = detokenize(&caption, &sum.vocab);

        let decoded = match &policy {
            Policy::Model(apm) => {
                let hidden = match apm.coupling {
                    Coupling::Hidden => Some(sum.caption_hidden(&raster, &caption)?),
                    Coupling::Text => None,
                };
                let input = ApmInput {
                    task_text: Some(&task.nl_description),
                    caption: &caption,
                    prev_action: prev_action.as_ref(),
                    caption_hidden: hidden.as_ref(),
                };
                let step_cfg = DecodeConfig { seed: decode_cfg.seed.wrapping_add(t as u64), ..*decode_cfg };
                apm.next_action(&input, &step_cfg)?.0
            }
            Policy::Scripted(program) => match program.steps.get(scripted_index) {
                Some(s) => {
                    scripted_index += 1;
                    DecodedAction::Step(s.clone())
                }
                None => DecodedAction::Stop,
            },
        };

        if decoded == DecodedAction::Stop {
            break;
        }

        let prev_for_record = prev_action.clone();
        let world_before = cur_world.clone();
        let agent_before = cur_agent.clone();
        let (executed, exec_error) = match &decoded {
            DecodedAction::Step(action) => match step(&cur_world, &cur_agent, action) {
                Ok((w, a)) => {
                    cur_world = w;
                    cur_agent = a;
                    (true, None)
                }
                Err(e) => (false, Some(e.to_string())),
            },
            DecodedAction::Malformed { .. } => (false, None),
            DecodedAction::Stop => unreachable!(),
        };
        if let DecodedAction::Step(action) = &decoded {
            prev_action = Some(action.clone());
        }

        goal_reached = executed && check_goal(&cur_world, &cur_agent, task);
        let reward = env_reward(executed, goal_reached, reward_spec);
        steps.push(TrajStep {
            raster,
            caption,
            caption_text,
            prev_action: prev_for_record,
            decoded,
            executed,
            exec_error,
            goal_after: goal_reached,
            reward,
            world_before,
            agent_before,
        });
    }

    Ok(Trajectory {
        task: task.clone(),
        initial_world: world.clone(),
        initial_agent: agent.clone(),
        steps,
        goal_reached,
    })
}

/// Re-simulates the trajectory's decoded actions from its initial state
/// and checks that recorded executability and rewards match.
pub fn replay_consistent(traj: &Trajectory, reward_spec: &RewardSpec) -> bool {
    let mut world = traj.initial_world.clone();
    let mut agent = traj.initial_agent.clone();
    for rec in &traj.steps {
        match &rec.decoded {
            DecodedAction::Step(action) => match step(&world, &agent, action) {
                Ok((w, a)) => {
                    if !rec.executed {
                        return false;
                    }
                    world = w;
                    agent = a;
                }
                Err(_) => {
                    if rec.executed {
                        return false;
                    }
                }
            },
            DecodedAction::Malformed { .. } => {
                if rec.executed {
                    return false;
                }
            }
            DecodedAction::Stop => return false,
        }
        let goal = rec.executed && check_goal(&world, &agent, &traj.task);
        if goal != rec.goal_after {
            return false;
        }
        if (env_reward(rec.executed, goal, reward_spec) - rec.reward).abs() > 1e-12 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langtext::Vocab;
    use crate::neuralcore::ModelConfig;
    use crate::worldsim::{expert_plan, gen_layout, layout_tasks, View};

    fn tiny_sum() -> SumModel {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            ffn_mult: 2,
            dropout_rate: 0.0,
            max_seq: 32,
        };
        let vocab = Vocab::from_corpus(["the agent stands in the kitchen"]);
        SumModel::new(cfg, View::Auto, vocab, 5).unwrap()
    }

    #[test]
    fn scripted_expert_rollout_executes_fully_and_reaches_goal() {
        let sum = tiny_sum();
        let world = gen_layout(1, 42).unwrap();
        let agent = AgentState::spawn();
        let task = layout_tasks(1).unwrap().into_iter().find(|t| t.name == "stock-fridge").unwrap();
        let plan = expert_plan(&world, &agent, &task).unwrap();
        let traj = rollout(
            Policy::Scripted(&plan),
            &sum,
            &world,
            &agent,
            &task,
            &DecodeConfig::default(),
            32,
            &RewardSpec::default(),
        )
        .unwrap();
        assert!(traj.goal_reached);
        assert_eq!(traj.predicted_steps(), plan.len());
        assert_eq!(traj.executed_steps(), plan.len());
        assert!(replay_consistent(&traj, &RewardSpec::default()));
        // final step carries the goal bonus
        assert_eq!(traj.steps.last().unwrap().reward, 6.0);
    }

    #[test]
    fn zero_max_steps_rejected() {
        let sum = tiny_sum();
        let world = gen_layout(1, 42).unwrap();
        let agent = AgentState::spawn();
        let task = layout_tasks(1).unwrap().remove(0);
        let err = rollout(
            Policy::Scripted(&Program::default()),
            &sum,
            &world,
            &agent,
            &task,
            &DecodeConfig::default(),
            0,
            &RewardSpec::default(),
        );
        assert!(matches!(err, Err(ModelError::InvalidArg(_))));
    }

    #[test]
    fn trajectory_bookkeeping_matches_rewards() {
        let sum = tiny_sum();
        let world = gen_layout(2, 3).unwrap();
        let agent = AgentState::spawn();
        let task = layout_tasks(2).unwrap().into_iter().find(|t| t.name == "shelve-book").unwrap();
        let plan = expert_plan(&world, &agent, &task).unwrap();
        let traj = rollout(
            Policy::Scripted(&plan),
            &sum,
            &world,
            &agent,
            &task,
            &DecodeConfig::default(),
            32,
            &RewardSpec::default(),
        )
        .unwrap();
        assert_eq!(traj.steps.len(), traj.predicted_steps());
        let expected: f64 = (traj.predicted_steps() - 1) as f64 + 6.0;
        assert_eq!(traj.total_reward(), expected);
    }
}
