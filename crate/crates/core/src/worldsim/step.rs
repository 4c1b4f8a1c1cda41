//! Action semantics: executability preconditions, postconditions, goal
//! checking, and the executability reward.

use super::{
    class_by_name, AgentState, ObjectId, Placement, Posture, Predicate, RewardSpec, SceneGraph,
    StateCond, Task,
};
use crate::actiondsl::{ActionStep, Verb};
use serde::{Deserialize, Serialize};

/// Which precondition an action violated. Each variant names the check
/// that failed, so callers can re-verify it against the input state.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ExecError {
    #[error("no object with id {id}")]
    UnknownObjectId { id: ObjectId },
    #[error("object {id} is in the agent's hand")]
    TargetHeld { id: ObjectId },
    #[error("agent is not near object {id}")]
    NotNear { id: ObjectId },
    #[error("object {id} is not grabbable")]
    NotGrabbable { id: ObjectId },
    #[error("both hands are full")]
    HandsFull,
    #[error("object {id} lacks the `{affordance}` affordance")]
    MissingAffordance { id: ObjectId, affordance: String },
    #[error("object {id} is already open")]
    AlreadyOpen { id: ObjectId },
    #[error("object {id} is already closed")]
    AlreadyClosed { id: ObjectId },
    #[error("object {id} is already powered on")]
    AlreadyPoweredOn { id: ObjectId },
    #[error("object {id} is already powered off")]
    AlreadyPoweredOff { id: ObjectId },
    #[error("agent is not holding object {id}")]
    NotHolding { id: ObjectId },
    #[error("container {id} is closed")]
    ContainerClosed { id: ObjectId },
    #[error("the agent's posture does not allow this")]
    WrongPosture,
    #[error("step has the wrong number of arguments for its verb")]
    MalformedStep,
}

struct Ctx<'a> {
    world: &'a SceneGraph,
    agent: &'a AgentState,
}

impl<'a> Ctx<'a> {
    fn exists(&self, id: ObjectId) -> Result<(), ExecError> {
        if self.world.objects.contains_key(&id) {
            Ok(())
        } else {
            Err(ExecError::UnknownObjectId { id })
        }
    }

    fn in_scene(&self, id: ObjectId) -> Result<(), ExecError> {
        self.exists(id)?;
        if self.world.objects[&id].placement.is_none() {
            Err(ExecError::TargetHeld { id })
        } else {
            Ok(())
        }
    }

    /// Near means: the agent last walked to exactly this object and it is
    /// still somewhere in the scene.
    fn near(&self, id: ObjectId) -> Result<(), ExecError> {
        self.in_scene(id)?;
        if self.agent.near == Some(id) {
            Ok(())
        } else {
            Err(ExecError::NotNear { id })
        }
    }

    fn affordance(&self, id: ObjectId, name: &str, has: bool) -> Result<(), ExecError> {
        if has {
            Ok(())
        } else {
            Err(ExecError::MissingAffordance { id, affordance: name.to_string() })
        }
    }

    fn standing(&self) -> Result<(), ExecError> {
        match self.agent.posture {
            Posture::Standing => Ok(()),
            Posture::Sitting(_) => Err(ExecError::WrongPosture),
        }
    }
}

/// Applies one action to `(world, agent)`, returning the successor state.
///
/// Pure: inputs are untouched; on success exactly the verb's documented
/// postcondition holds and nothing else changes.
pub fn step(
    world: &SceneGraph,
    agent: &AgentState,
    action: &ActionStep,
) -> Result<(SceneGraph, AgentState), ExecError> {
    let expected = action.verb.arity();
    if action.args.len() != expected {
        return Err(ExecError::MalformedStep);
    }
    let ctx = Ctx { world, agent };
    let arg = |i: usize| action.args[i].id;

    let mut w = world.clone();
    let mut a = agent.clone();

    match action.verb {
        Verb::Walk | Verb::Run => {
            let id = arg(0);
            ctx.in_scene(id)?;
            ctx.standing()?;
            a.room = world.objects[&id].room;
            a.near = Some(id);
        }
        Verb::Grab => {
            let id = arg(0);
            ctx.near(id)?;
            let class = class_by_name(&world.objects[&id].class).expect("registered class");
            if !class.affordances.grabbable {
                return Err(ExecError::NotGrabbable { id });
            }
            if let Some(container) = world.sealed_ancestor(id) {
                return Err(ExecError::ContainerClosed { id: container });
            }
            if agent.holding.len() >= 2 {
                return Err(ExecError::HandsFull);
            }
            w.objects.get_mut(&id).unwrap().placement = None;
            a.holding.push(id);
        }
        Verb::Open | Verb::Close => {
            let id = arg(0);
            ctx.near(id)?;
            let class = class_by_name(&world.objects[&id].class).expect("registered class");
            ctx.affordance(id, "openable", class.affordances.openable)?;
            let open_now = world.objects[&id].state.open;
            match action.verb {
                Verb::Open if open_now => return Err(ExecError::AlreadyOpen { id }),
                Verb::Close if !open_now => return Err(ExecError::AlreadyClosed { id }),
                _ => {}
            }
            w.objects.get_mut(&id).unwrap().state.open = !open_now;
        }
        Verb::SwitchOn | Verb::SwitchOff => {
            let id = arg(0);
            ctx.near(id)?;
            let class = class_by_name(&world.objects[&id].class).expect("registered class");
            ctx.affordance(id, "switchable", class.affordances.switchable)?;
            let powered = world.objects[&id].state.powered;
            match action.verb {
                Verb::SwitchOn if powered => return Err(ExecError::AlreadyPoweredOn { id }),
                Verb::SwitchOff if !powered => return Err(ExecError::AlreadyPoweredOff { id }),
                _ => {}
            }
            w.objects.get_mut(&id).unwrap().state.powered = !powered;
        }
        Verb::PutOn | Verb::PutIn => {
            let item = arg(0);
            let dest = arg(1);
            ctx.exists(item)?;
            if !agent.is_holding(item) {
                return Err(ExecError::NotHolding { id: item });
            }
            ctx.near(dest)?;
            let dest_class = class_by_name(&world.objects[&dest].class).expect("registered class");
            let dest_obj = &world.objects[&dest];
            let placement = match action.verb {
                Verb::PutOn => {
                    ctx.affordance(dest, "surface", dest_class.affordances.surface)?;
                    Placement::On(dest)
                }
                _ => {
                    ctx.affordance(dest, "container", dest_class.affordances.container)?;
                    if dest_class.affordances.openable && !dest_obj.state.open {
                        return Err(ExecError::ContainerClosed { id: dest });
                    }
                    Placement::Inside(dest)
                }
            };
            let item_obj = w.objects.get_mut(&item).unwrap();
            item_obj.placement = Some(placement);
            item_obj.room = dest_obj.room;
            a.holding.retain(|&h| h != item);
        }
        Verb::Sit => {
            let id = arg(0);
            ctx.near(id)?;
            let class = class_by_name(&world.objects[&id].class).expect("registered class");
            ctx.affordance(id, "sittable", class.affordances.sittable)?;
            ctx.standing()?;
            a.posture = Posture::Sitting(id);
        }
        Verb::StandUp => match agent.posture {
            Posture::Sitting(_) => a.posture = Posture::Standing,
            Posture::Standing => return Err(ExecError::WrongPosture),
        },
    }
    Ok((w, a))
}

fn cond_holds(world: &SceneGraph, id: ObjectId, cond: StateCond) -> bool {
    let state = world.objects[&id].state;
    match cond {
        StateCond::Open => state.open,
        StateCond::Closed => !state.open,
        StateCond::PoweredOn => state.powered,
        StateCond::PoweredOff => !state.powered,
    }
}

fn predicate_holds(world: &SceneGraph, agent: &AgentState, pred: &Predicate) -> bool {
    match pred {
        Predicate::Inside { a, b } => world.objects.iter().any(|(_, o)| {
            o.class == *a
                && matches!(o.placement, Some(Placement::Inside(t)) if world.objects[&t].class == *b)
        }),
        Predicate::On { a, b } => world.objects.iter().any(|(_, o)| {
            o.class == *a
                && matches!(o.placement, Some(Placement::On(t)) if world.objects[&t].class == *b)
        }),
        Predicate::State { class, cond } => world
            .objects
            .iter()
            .filter(|(_, o)| o.class == *class)
            .all(|(id, _)| cond_holds(world, *id, *cond)),
        Predicate::Holding { class } => agent
            .holding
            .iter()
            .any(|id| world.objects[id].class == *class),
        Predicate::SittingOn { class } => match agent.posture {
            Posture::Sitting(id) => world.objects[&id].class == *class,
            Posture::Standing => false,
        },
    }
}

/// True iff every goal predicate holds. The empty conjunction is true.
pub fn check_goal(world: &SceneGraph, agent: &AgentState, task: &Task) -> bool {
    task.goal.iter().all(|p| predicate_holds(world, agent, p))
}

/// Executability reward: `step_reward` when the step executed,
/// `fail_reward` otherwise, plus `goal_bonus` when the goal was reached.
pub fn env_reward(executed: bool, goal_reached: bool, cfg: &RewardSpec) -> f64 {
    let base = if executed { cfg.step_reward } else { cfg.fail_reward };
    base + if goal_reached { cfg.goal_bonus } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::gen_layout;

    fn world1() -> (SceneGraph, AgentState) {
        (gen_layout(1, 42).unwrap(), AgentState::spawn())
    }

    fn walk(id: ObjectId, world: &SceneGraph) -> ActionStep {
        ActionStep::unary(Verb::Walk, world.objects[&id].class.clone(), id)
    }

    #[test]
    fn grab_near_with_free_hand() {
        let (w, a) = world1();
        let groceries = w.find_class("groceries").unwrap();
        let (w, a) = step(&w, &a, &walk(groceries, &w)).unwrap();
        let (w2, a2) = step(&w, &a, &ActionStep::unary(Verb::Grab, "groceries", groceries)).unwrap();
        assert!(a2.is_holding(groceries));
        assert_eq!(w2.objects[&groceries].placement, None);
        // purity: the inputs kept their values
        assert_eq!(w.objects[&groceries].placement.is_some(), true);
        assert!(!a.is_holding(groceries));
    }

    #[test]
    fn open_from_another_room_is_not_near() {
        let (w, a) = world1();
        let fridge = w.find_class("fridge").unwrap();
        let sofa = w.find_class("sofa").unwrap();
        let (w, a) = step(&w, &a, &walk(sofa, &w)).unwrap();
        let err = step(&w, &a, &ActionStep::unary(Verb::Open, "fridge", fridge)).unwrap_err();
        assert_eq!(err, ExecError::NotNear { id: fridge });
    }

    #[test]
    fn put_in_closed_container_rejected() {
        let (w, a) = world1();
        let groceries = w.find_class("groceries").unwrap();
        let fridge = w.find_class("fridge").unwrap();
        let (w, a) = step(&w, &a, &walk(groceries, &w)).unwrap();
        let (w, a) = step(&w, &a, &ActionStep::unary(Verb::Grab, "groceries", groceries)).unwrap();
        let (w, a) = step(&w, &a, &walk(fridge, &w)).unwrap();
        let err = step(
            &w,
            &a,
            &ActionStep::binary(Verb::PutIn, "groceries", groceries, "fridge", fridge),
        )
        .unwrap_err();
        assert_eq!(err, ExecError::ContainerClosed { id: fridge });
    }

    #[test]
    fn walk_while_sitting_rejected() {
        let (w, a) = world1();
        let sofa = w.find_class("sofa").unwrap();
        let tv = w.find_class("tv").unwrap();
        let (w, a) = step(&w, &a, &walk(sofa, &w)).unwrap();
        let (w, a) = step(&w, &a, &ActionStep::unary(Verb::Sit, "sofa", sofa)).unwrap();
        let err = step(&w, &a, &walk(tv, &w)).unwrap_err();
        assert_eq!(err, ExecError::WrongPosture);
        let (_, a) = step(&w, &a, &ActionStep::nullary(Verb::StandUp)).unwrap();
        assert_eq!(a.posture, Posture::Standing);
    }

    #[test]
    fn grab_with_hands_full() {
        let (w, a) = world1();
        let groceries = w.find_class("groceries").unwrap();
        let cup = w.find_class("cup").unwrap();
        let remote = w.find_class("remote").unwrap();
        let (w, a) = step(&w, &a, &walk(groceries, &w)).unwrap();
        let (w, a) = step(&w, &a, &ActionStep::unary(Verb::Grab, "groceries", groceries)).unwrap();
        let (w, a) = step(&w, &a, &walk(cup, &w)).unwrap();
        let (w, a) = step(&w, &a, &ActionStep::unary(Verb::Grab, "cup", cup)).unwrap();
        let (w, a) = step(&w, &a, &walk(remote, &w)).unwrap();
        let err = step(&w, &a, &ActionStep::unary(Verb::Grab, "remote", remote)).unwrap_err();
        assert_eq!(err, ExecError::HandsFull);
    }

    #[test]
    fn switch_semantics() {
        let (w, a) = world1();
        let tv = w.find_class("tv").unwrap();
        let (w, a) = step(&w, &a, &walk(tv, &w)).unwrap();
        let err = step(&w, &a, &ActionStep::unary(Verb::SwitchOff, "tv", tv)).unwrap_err();
        assert_eq!(err, ExecError::AlreadyPoweredOff { id: tv });
        let (w, a) = step(&w, &a, &ActionStep::unary(Verb::SwitchOn, "tv", tv)).unwrap();
        assert!(w.objects[&tv].state.powered);
        let err = step(&w, &a, &ActionStep::unary(Verb::SwitchOn, "tv", tv)).unwrap_err();
        assert_eq!(err, ExecError::AlreadyPoweredOn { id: tv });
    }

    #[test]
    fn unknown_id_and_malformed_step() {
        let (w, a) = world1();
        let err = step(&w, &a, &ActionStep::unary(Verb::Walk, "ghost", 999)).unwrap_err();
        assert_eq!(err, ExecError::UnknownObjectId { id: 999 });
        let err = step(&w, &a, &ActionStep::nullary(Verb::Walk)).unwrap_err();
        assert_eq!(err, ExecError::MalformedStep);
    }

    #[test]
    fn goal_checking_and_vacuous_conjunction() {
        let (w, a) = world1();
        let task = Task {
            name: "t".into(),
            goal: vec![Predicate::Inside { a: "groceries".into(), b: "fridge".into() }],
            nl_description: "put groceries in the fridge".into(),
        };
        assert!(!check_goal(&w, &a, &task));
        let empty = Task { name: "e".into(), goal: vec![], nl_description: String::new() };
        assert!(check_goal(&w, &a, &empty));
    }

    #[test]
    fn reward_formula() {
        let cfg = RewardSpec::default();
        assert_eq!(env_reward(true, false, &cfg), 1.0);
        assert_eq!(env_reward(false, false, &cfg), 0.0);
        assert_eq!(env_reward(true, true, &cfg), 6.0);
    }

    #[test]
    fn step_is_pure_and_repeatable() {
        let (w, a) = world1();
        let groceries = w.find_class("groceries").unwrap();
        let act = walk(groceries, &w);
        let r1 = step(&w, &a, &act).unwrap();
        let r2 = step(&w, &a, &act).unwrap();
        assert_eq!(r1, r2);
    }
}
