//! Seven hand-authored layout templates with seed-driven placement jitter.
//!
//! A template fixes the rooms, the object roster (ids are assigned in
//! template order, starting at 1), initial states, and the task list. The
//! seed only picks among each object's allowed placements; everything else
//! is stable across seeds.

use super::{
    mix_seed, ObjState, ObjectId, ObjectInstance, Placement, Predicate, Room, SceneGraph, StateCond,
    Task,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const LAYOUT_COUNT: u8 = 7;

/// The requested layout id is outside `1..=LAYOUT_COUNT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("invalid layout id {0}; layouts are 1..={LAYOUT_COUNT}")]
pub struct InvalidLayout(pub u8);

enum Opt {
    Floor,
    OnClass(&'static str),
    InsideClass(&'static str),
}

struct ObjSpec {
    class: &'static str,
    room: u8,
    options: &'static [Opt],
    open: bool,
    powered: bool,
}

impl ObjSpec {
    const fn fixed(class: &'static str, room: u8) -> Self {
        ObjSpec { class, room, options: &[Opt::Floor], open: false, powered: false }
    }
    const fn jitter(class: &'static str, room: u8, options: &'static [Opt]) -> Self {
        ObjSpec { class, room, options, open: false, powered: false }
    }
    const fn powered(class: &'static str, room: u8) -> Self {
        ObjSpec { class, room, options: &[Opt::Floor], open: false, powered: true }
    }
}

struct Template {
    rooms: &'static [&'static str],
    objects: &'static [ObjSpec],
}

static TEMPLATES: [Template; LAYOUT_COUNT as usize] = [
    // 1: kitchen + livingroom
    Template {
        rooms: &["kitchen", "livingroom"],
        objects: &[
            ObjSpec::fixed("fridge", 0),
            ObjSpec::jitter("groceries", 0, &[Opt::Floor, Opt::OnClass("table")]),
            ObjSpec::jitter("cup", 0, &[Opt::Floor, Opt::OnClass("table")]),
            ObjSpec::fixed("table", 0),
            ObjSpec::fixed("sofa", 1),
            ObjSpec::fixed("tv", 1),
            ObjSpec::jitter("remote", 1, &[Opt::Floor, Opt::InsideClass("basket")]),
            ObjSpec::fixed("basket", 1),
        ],
    },
    // 2: kitchen + bedroom
    Template {
        rooms: &["kitchen", "bedroom"],
        objects: &[
            ObjSpec::fixed("microwave", 0),
            ObjSpec::fixed("table", 0),
            ObjSpec::jitter("plate", 0, &[Opt::Floor, Opt::OnClass("table")]),
            ObjSpec::fixed("bed", 1),
            ObjSpec::fixed("lamp", 1),
            ObjSpec::jitter("book", 1, &[Opt::Floor, Opt::OnClass("bed"), Opt::OnClass("shelf")]),
            ObjSpec::fixed("shelf", 1),
        ],
    },
    // 3: livingroom + office (the lamp starts powered)
    Template {
        rooms: &["livingroom", "office"],
        objects: &[
            ObjSpec::fixed("sofa", 0),
            ObjSpec::fixed("tv", 0),
            ObjSpec::jitter("remote", 0, &[Opt::Floor, Opt::OnClass("desk")]),
            ObjSpec::powered("lamp", 1),
            ObjSpec::fixed("desk", 1),
            ObjSpec::fixed("computer", 1),
            ObjSpec::fixed("chair", 1),
            ObjSpec::jitter("book", 1, &[Opt::Floor, Opt::OnClass("desk")]),
        ],
    },
    // 4: kitchen + bathroom
    Template {
        rooms: &["kitchen", "bathroom"],
        objects: &[
            ObjSpec::fixed("fridge", 0),
            ObjSpec::fixed("cabinet", 0),
            ObjSpec::jitter("cup", 0, &[Opt::Floor, Opt::InsideClass("cabinet")]),
            ObjSpec::fixed("groceries", 0),
            ObjSpec::fixed("sink", 1),
            ObjSpec::fixed("toilet", 1),
            ObjSpec::jitter("towel", 1, &[Opt::Floor, Opt::OnClass("sink")]),
            ObjSpec::fixed("basket", 1),
        ],
    },
    // 5: bedroom + gym
    Template {
        rooms: &["bedroom", "gym"],
        objects: &[
            ObjSpec::fixed("bed", 0),
            ObjSpec::jitter("pillow", 0, &[Opt::Floor, Opt::OnClass("bed")]),
            ObjSpec::jitter("book", 0, &[Opt::Floor, Opt::OnClass("bed")]),
            ObjSpec::fixed("lamp", 0),
            ObjSpec::fixed("treadmill", 1),
            ObjSpec::fixed("towel", 1),
            ObjSpec::fixed("basket", 1),
            ObjSpec::fixed("tv", 1),
        ],
    },
    // 6: office + livingroom + hallway
    Template {
        rooms: &["office", "livingroom", "hallway"],
        objects: &[
            ObjSpec::fixed("desk", 0),
            ObjSpec::fixed("chair", 0),
            ObjSpec::fixed("computer", 0),
            ObjSpec::jitter("book", 0, &[Opt::Floor, Opt::OnClass("desk"), Opt::OnClass("shelf")]),
            ObjSpec::fixed("shelf", 0),
            ObjSpec::fixed("sofa", 1),
            ObjSpec::fixed("tv", 1),
            ObjSpec::fixed("plant", 2),
        ],
    },
    // 7: kitchen + livingroom + bedroom
    Template {
        rooms: &["kitchen", "livingroom", "bedroom"],
        objects: &[
            ObjSpec::fixed("fridge", 0),
            ObjSpec::fixed("groceries", 0),
            ObjSpec::fixed("microwave", 0),
            ObjSpec::jitter("cup", 0, &[Opt::Floor, Opt::InsideClass("microwave")]),
            ObjSpec::fixed("sofa", 1),
            ObjSpec::fixed("tv", 1),
            ObjSpec::fixed("bed", 2),
            ObjSpec::jitter("lamp", 2, &[Opt::Floor, Opt::OnClass("bed")]),
        ],
    },
];

/// Builds the scene graph for a layout. Deterministic: the same
/// `(layout_id, seed)` always yields an identical graph.
pub fn gen_layout(layout_id: u8, seed: u64) -> Result<SceneGraph, InvalidLayout> {
    if layout_id < 1 || layout_id > LAYOUT_COUNT {
        return Err(InvalidLayout(layout_id));
    }
    let template = &TEMPLATES[(layout_id - 1) as usize];

    let rooms = template
        .rooms
        .iter()
        .enumerate()
        .map(|(i, name)| Room { id: i as u8, name: name.to_string() })
        .collect();

    let mut objects: BTreeMap<ObjectId, ObjectInstance> = BTreeMap::new();
    for (i, spec) in template.objects.iter().enumerate() {
        objects.insert(
            (i + 1) as ObjectId,
            ObjectInstance {
                class: spec.class.to_string(),
                room: spec.room,
                state: ObjState { open: spec.open, powered: spec.powered },
                placement: Some(Placement::Floor),
            },
        );
    }

    // Seed-driven jitter: pick one allowed placement per object. Class
    // references resolve to the lowest-id instance other than the object
    // itself.
    let mut world = SceneGraph { rooms, objects, layout_id, seed };
    for (i, spec) in template.objects.iter().enumerate() {
        let id = (i + 1) as ObjectId;
        if spec.options.len() <= 1 {
            continue;
        }
        let pick = (mix_seed(seed ^ ((layout_id as u64) << 32) ^ id as u64) % spec.options.len() as u64)
            as usize;
        let placement = match &spec.options[pick] {
            Opt::Floor => Placement::Floor,
            Opt::OnClass(class) => match find_other(&world, class, id) {
                Some(target) => Placement::On(target),
                None => Placement::Floor,
            },
            Opt::InsideClass(class) => match find_other(&world, class, id) {
                Some(target) => Placement::Inside(target),
                None => Placement::Floor,
            },
        };
        world.objects.get_mut(&id).unwrap().placement = Some(placement);
    }
    Ok(world)
}

fn find_other(world: &SceneGraph, class: &str, not: ObjectId) -> Option<ObjectId> {
    world
        .objects
        .iter()
        .find(|(id, o)| **id != not && o.class == class)
        .map(|(id, _)| *id)
}

/// The task list for a layout; every goal class exists in the template.
pub fn layout_tasks(layout_id: u8) -> Result<Vec<Task>, InvalidLayout> {
    if layout_id < 1 || layout_id > LAYOUT_COUNT {
        return Err(InvalidLayout(layout_id));
    }
    fn task(name: &str, nl: &str, goal: Vec<Predicate>) -> Task {
        Task { name: name.to_string(), goal, nl_description: nl.to_string() }
    }
    fn inside(a: &str, b: &str) -> Predicate {
        Predicate::Inside { a: a.into(), b: b.into() }
    }
    fn on(a: &str, b: &str) -> Predicate {
        Predicate::On { a: a.into(), b: b.into() }
    }
    fn state(class: &str, cond: StateCond) -> Predicate {
        Predicate::State { class: class.into(), cond }
    }

    Ok(match layout_id {
        1 => vec![
            task(
                "stock-fridge",
                "put groceries in the fridge",
                vec![inside("groceries", "fridge"), state("fridge", StateCond::Closed)],
            ),
            task("set-table", "put the cup on the table", vec![on("cup", "table")]),
            task(
                "watch-tv",
                "watch tv on the sofa",
                vec![
                    state("tv", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "sofa".into() },
                ],
            ),
            task("tidy-remote", "put the remote in the basket", vec![inside("remote", "basket")]),
        ],
        2 => vec![
            task(
                "warm-plate",
                "warm the plate in the microwave",
                vec![
                    inside("plate", "microwave"),
                    state("microwave", StateCond::Closed),
                    state("microwave", StateCond::PoweredOn),
                ],
            ),
            task("shelve-book", "put the book on the shelf", vec![on("book", "shelf")]),
            task("light-on", "turn on the lamp", vec![state("lamp", StateCond::PoweredOn)]),
            task("rest", "sit down on the bed", vec![Predicate::SittingOn { class: "bed".into() }]),
        ],
        3 => vec![
            task("light-off", "turn off the lamp", vec![state("lamp", StateCond::PoweredOff)]),
            task(
                "work",
                "work at the computer",
                vec![
                    state("computer", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "chair".into() },
                ],
            ),
            task("desk-book", "put the book on the desk", vec![on("book", "desk")]),
            task(
                "watch-tv",
                "watch tv on the sofa",
                vec![
                    state("tv", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "sofa".into() },
                ],
            ),
        ],
        4 => vec![
            task(
                "stock-fridge",
                "put groceries in the fridge",
                vec![inside("groceries", "fridge"), state("fridge", StateCond::Closed)],
            ),
            task("hamper", "put the towel in the basket", vec![inside("towel", "basket")]),
            task(
                "stow-cup",
                "put the cup in the cabinet",
                vec![inside("cup", "cabinet"), state("cabinet", StateCond::Closed)],
            ),
            task("rest", "sit on the toilet", vec![Predicate::SittingOn { class: "toilet".into() }]),
        ],
        5 => vec![
            task(
                "exercise",
                "run on the treadmill",
                vec![state("treadmill", StateCond::PoweredOn)],
            ),
            task("make-bed", "put the pillow on the bed", vec![on("pillow", "bed")]),
            task(
                "read",
                "read a book in bed",
                vec![
                    Predicate::Holding { class: "book".into() },
                    Predicate::SittingOn { class: "bed".into() },
                ],
            ),
            task("hamper", "put the towel in the basket", vec![inside("towel", "basket")]),
        ],
        6 => vec![
            task("shelve-book", "put the book on the shelf", vec![on("book", "shelf")]),
            task("tv-on", "turn on the tv", vec![state("tv", StateCond::PoweredOn)]),
            task(
                "work",
                "work at the computer",
                vec![
                    state("computer", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "chair".into() },
                ],
            ),
            task(
                "watch-tv",
                "watch tv on the sofa",
                vec![
                    state("tv", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "sofa".into() },
                ],
            ),
        ],
        7 => vec![
            task(
                "stock-fridge",
                "put groceries in the fridge",
                vec![inside("groceries", "fridge"), state("fridge", StateCond::Closed)],
            ),
            task(
                "warm-cup",
                "warm the cup in the microwave",
                vec![
                    inside("cup", "microwave"),
                    state("microwave", StateCond::Closed),
                    state("microwave", StateCond::PoweredOn),
                ],
            ),
            task(
                "watch-tv",
                "watch tv on the sofa",
                vec![
                    state("tv", StateCond::PoweredOn),
                    Predicate::SittingOn { class: "sofa".into() },
                ],
            ),
            task("light-on", "turn on the lamp", vec![state("lamp", StateCond::PoweredOn)]),
        ],
        _ => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{class_by_name, Placement};

    #[test]
    fn gen_is_deterministic() {
        let a = gen_layout(1, 42).unwrap();
        let b = gen_layout(1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_canonical_text(), b.to_canonical_text());
    }

    #[test]
    fn different_seeds_differ_in_placement() {
        let a = gen_layout(1, 42).unwrap();
        let b = gen_layout(1, 43).unwrap();
        assert_ne!(a.to_canonical_text(), b.to_canonical_text());
        let placements =
            |w: &SceneGraph| w.objects.values().map(|o| o.placement).collect::<Vec<_>>();
        assert_ne!(placements(&a), placements(&b));
    }

    #[test]
    fn out_of_range_layout_rejected() {
        assert_eq!(gen_layout(8, 42), Err(InvalidLayout(8)));
        assert_eq!(gen_layout(0, 42), Err(InvalidLayout(0)));
    }

    #[test]
    fn all_layouts_satisfy_invariants() {
        for layout in 1..=LAYOUT_COUNT {
            for seed in 0..20u64 {
                let world = gen_layout(layout, seed).unwrap();
                for (id, obj) in &world.objects {
                    let class = class_by_name(&obj.class).expect("registered class");
                    assert!((obj.room as usize) < world.rooms.len());
                    match obj.placement {
                        Some(Placement::On(t)) => {
                            let holder = &world.objects[&t];
                            assert!(class_by_name(&holder.class).unwrap().affordances.surface);
                            assert_ne!(t, *id);
                        }
                        Some(Placement::Inside(t)) => {
                            let holder = &world.objects[&t];
                            assert!(class_by_name(&holder.class).unwrap().affordances.container);
                            assert_ne!(t, *id);
                        }
                        Some(Placement::Floor) => {}
                        None => panic!("fresh layouts hold nothing"),
                    }
                    let _ = class;
                    // placement chains terminate at the floor
                    assert!(world.root_of(*id).is_some());
                }
            }
        }
    }

    #[test]
    fn tasks_reference_present_classes() {
        for layout in 1..=LAYOUT_COUNT {
            let world = gen_layout(layout, 7).unwrap();
            for task in layout_tasks(layout).unwrap() {
                for pred in &task.goal {
                    let classes: Vec<&str> = match pred {
                        Predicate::Inside { a, b } | Predicate::On { a, b } => vec![a, b],
                        Predicate::State { class, .. }
                        | Predicate::Holding { class }
                        | Predicate::SittingOn { class } => vec![class],
                    };
                    for c in classes {
                        assert!(
                            world.find_class(c).is_some(),
                            "layout {layout} task {} names absent class {c}",
                            task.name
                        );
                    }
                }
            }
        }
    }
}
