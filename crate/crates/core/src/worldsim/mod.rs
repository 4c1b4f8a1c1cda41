//! Deterministic household world: scene graphs, action semantics with
//! executability preconditions, goal checking, procedural layouts, and
//! rasterized observations in three views.
//!
//! Everything here is a pure function of its inputs. `step` never mutates
//! the world it is given; layouts and renders are reproducible from
//! `(layout_id, seed)` alone.

mod layouts;
mod plan;
mod registry;
mod render;
mod step;

pub use layouts::{gen_layout, layout_tasks, InvalidLayout, LAYOUT_COUNT};
pub use plan::{expert_plan, PlanError};
pub use registry::{class_by_glyph, class_by_name, Affordance, ObjectClass, CLASSES, FIRST_GLYPH};
pub use render::{agent_cell, object_anchor_cell, render, Raster, View, ViewDims, AGENT_TILE, EMPTY_TILE, MOD_AGENT, MOD_OPEN, MOD_POWERED, MOD_SITTING, WALL_TILE};
pub use step::{check_goal, env_reward, step, ExecError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type ObjectId = u32;
pub type RoomId = u8;

/// Where an object currently rests. Held objects carry `None` placement on
/// their [`ObjectInstance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Floor,
    On(ObjectId),
    Inside(ObjectId),
}

/// Mutable per-object state flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjState {
    pub open: bool,
    pub powered: bool,
}

/// One object in the scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    /// Class name, resolvable through [`class_by_name`].
    pub class: String,
    pub room: RoomId,
    pub state: ObjState,
    /// `None` while the agent holds the object.
    pub placement: Option<Placement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub name: String,
}

/// The simulated world the agent acts in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub rooms: Vec<Room>,
    pub objects: BTreeMap<ObjectId, ObjectInstance>,
    pub layout_id: u8,
    pub seed: u64,
}

impl SceneGraph {
    /// Canonical structured-text form with stable field order, used by the
    /// dataset files and golden tests.
    pub fn to_canonical_text(&self) -> String {
        serde_json::to_string(self).expect("scene graph serializes")
    }

    pub fn from_canonical_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn room_name(&self, id: RoomId) -> &str {
        &self.rooms[id as usize].name
    }

    /// Lowest-id object of the given class, if any.
    pub fn find_class(&self, class: &str) -> Option<ObjectId> {
        self.objects
            .iter()
            .find(|(_, o)| o.class == class)
            .map(|(id, _)| *id)
    }

    /// All ids of the given class in ascending order.
    pub fn ids_of_class(&self, class: &str) -> Vec<ObjectId> {
        self.objects
            .iter()
            .filter(|(_, o)| o.class == class)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Follows the placement chain to the floor-rooted ancestor.
    /// Returns `None` for held objects (or anything resting on one).
    pub fn root_of(&self, id: ObjectId) -> Option<ObjectId> {
        let mut cur = id;
        for _ in 0..self.objects.len() + 1 {
            match self.objects.get(&cur)?.placement {
                None => return None,
                Some(Placement::Floor) => return Some(cur),
                Some(Placement::On(p)) | Some(Placement::Inside(p)) => cur = p,
            }
        }
        None // cycle guard; valid graphs are forests
    }

    /// The innermost closed openable container strictly above `id` in the
    /// placement chain, if any.
    pub fn sealed_ancestor(&self, id: ObjectId) -> Option<ObjectId> {
        let mut cur = id;
        let mut found = None;
        for _ in 0..self.objects.len() + 1 {
            match self.objects.get(&cur)?.placement {
                Some(Placement::Inside(p)) => {
                    let holder = self.objects.get(&p)?;
                    let cls = class_by_name(&holder.class)?;
                    if cls.affordances.openable && !holder.state.open && found.is_none() {
                        found = Some(p);
                    }
                    cur = p;
                }
                Some(Placement::On(p)) => cur = p,
                _ => break,
            }
        }
        found
    }

    /// Direct children resting on `id`, ascending.
    pub fn on_top_of(&self, id: ObjectId) -> Vec<ObjectId> {
        self.objects
            .iter()
            .filter(|(_, o)| o.placement == Some(Placement::On(id)))
            .map(|(cid, _)| *cid)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Posture {
    Standing,
    Sitting(ObjectId),
}

/// The agent: its room, what it stands near, what it holds (two hands),
/// and its posture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub room: RoomId,
    pub near: Option<ObjectId>,
    pub holding: Vec<ObjectId>,
    pub posture: Posture,
}

impl AgentState {
    /// Fresh agent in the first room, empty-handed and standing.
    pub fn spawn() -> Self {
        AgentState { room: 0, near: None, holding: Vec::new(), posture: Posture::Standing }
    }

    pub fn to_canonical_text(&self) -> String {
        serde_json::to_string(self).expect("agent state serializes")
    }

    pub fn from_canonical_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn is_holding(&self, id: ObjectId) -> bool {
        self.holding.contains(&id)
    }
}

/// Desired state in a [`Predicate::State`] condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateCond {
    Open,
    Closed,
    PoweredOn,
    PoweredOff,
}

/// Goal predicates range over object classes, not instance ids.
///
/// `Inside`/`On`/`Holding`/`SittingOn` are existential; `State` must hold
/// for every instance of the class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Inside { a: String, b: String },
    On { a: String, b: String },
    State { class: String, cond: StateCond },
    Holding { class: String },
    SittingOn { class: String },
}

/// A named goal with its short natural-language description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub goal: Vec<Predicate>,
    pub nl_description: String,
}

/// Reward shape for executability training: a per-step reward when the
/// action executes, a (usually zero) reward when it does not, and a bonus
/// when the step completes the task goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub step_reward: f64,
    pub fail_reward: f64,
    pub goal_bonus: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { step_reward: 1.0, fail_reward: 0.0, goal_bonus: 5.0 }
    }
}

/// splitmix64; the stable hash used for seed-derived placement and cameras.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
