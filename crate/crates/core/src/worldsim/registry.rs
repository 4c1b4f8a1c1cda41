//! The closed object-class registry: names, affordances, and raster glyphs.

use serde::{Deserialize, Serialize};

/// What an object class lets the agent do with its instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affordance {
    pub grabbable: bool,
    pub openable: bool,
    pub switchable: bool,
    pub container: bool,
    pub surface: bool,
    pub sittable: bool,
}

impl Affordance {
    const fn none() -> Self {
        Affordance {
            grabbable: false,
            openable: false,
            switchable: false,
            container: false,
            surface: false,
            sittable: false,
        }
    }
    const fn grabbable() -> Self {
        Affordance { grabbable: true, ..Self::none() }
    }
    const fn surface() -> Self {
        Affordance { surface: true, ..Self::none() }
    }
    const fn sittable() -> Self {
        Affordance { sittable: true, ..Self::none() }
    }
    const fn switchable() -> Self {
        Affordance { switchable: true, ..Self::none() }
    }
}

/// One entry of the class registry. Glyphs are the tile codes used by the
/// rasterizer; codes below [`FIRST_GLYPH`] are reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectClass {
    pub name: &'static str,
    pub affordances: Affordance,
    pub glyph: u16,
}

/// Lowest tile code assigned to an object class; smaller codes are the
/// reserved empty/wall/agent tiles.
pub const FIRST_GLYPH: u16 = 8;

pub const CLASSES: &[ObjectClass] = &[
    ObjectClass {
        name: "fridge",
        affordances: Affordance { container: true, openable: true, ..Affordance::none() },
        glyph: 8,
    },
    ObjectClass { name: "groceries", affordances: Affordance::grabbable(), glyph: 9 },
    ObjectClass { name: "cup", affordances: Affordance::grabbable(), glyph: 10 },
    ObjectClass { name: "plate", affordances: Affordance::grabbable(), glyph: 11 },
    ObjectClass { name: "table", affordances: Affordance::surface(), glyph: 12 },
    ObjectClass { name: "desk", affordances: Affordance::surface(), glyph: 13 },
    ObjectClass { name: "chair", affordances: Affordance::sittable(), glyph: 14 },
    ObjectClass { name: "sofa", affordances: Affordance::sittable(), glyph: 15 },
    ObjectClass {
        name: "bed",
        affordances: Affordance { sittable: true, surface: true, ..Affordance::none() },
        glyph: 16,
    },
    ObjectClass { name: "tv", affordances: Affordance::switchable(), glyph: 17 },
    ObjectClass { name: "lamp", affordances: Affordance::switchable(), glyph: 18 },
    ObjectClass { name: "computer", affordances: Affordance::switchable(), glyph: 19 },
    ObjectClass {
        name: "microwave",
        affordances: Affordance {
            container: true,
            openable: true,
            switchable: true,
            ..Affordance::none()
        },
        glyph: 20,
    },
    ObjectClass {
        name: "cabinet",
        affordances: Affordance { container: true, openable: true, ..Affordance::none() },
        glyph: 21,
    },
    ObjectClass { name: "shelf", affordances: Affordance::surface(), glyph: 22 },
    // A container without a lid: PutIn never needs an Open first.
    ObjectClass {
        name: "basket",
        affordances: Affordance { container: true, ..Affordance::none() },
        glyph: 23,
    },
    ObjectClass { name: "book", affordances: Affordance::grabbable(), glyph: 24 },
    ObjectClass { name: "remote", affordances: Affordance::grabbable(), glyph: 25 },
    ObjectClass { name: "pillow", affordances: Affordance::grabbable(), glyph: 26 },
    ObjectClass { name: "toilet", affordances: Affordance::sittable(), glyph: 27 },
    ObjectClass { name: "sink", affordances: Affordance::surface(), glyph: 28 },
    ObjectClass { name: "treadmill", affordances: Affordance::switchable(), glyph: 29 },
    ObjectClass { name: "plant", affordances: Affordance::none(), glyph: 30 },
    ObjectClass { name: "towel", affordances: Affordance::grabbable(), glyph: 31 },
];

pub fn class_by_name(name: &str) -> Option<&'static ObjectClass> {
    CLASSES.iter().find(|c| c.name == name)
}

pub fn class_by_glyph(glyph: u16) -> Option<&'static ObjectClass> {
    CLASSES.iter().find(|c| c.glyph == glyph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn names_and_glyphs_unique() {
        let names: BTreeSet<_> = CLASSES.iter().map(|c| c.name).collect();
        let glyphs: BTreeSet<_> = CLASSES.iter().map(|c| c.glyph).collect();
        assert_eq!(names.len(), CLASSES.len());
        assert_eq!(glyphs.len(), CLASSES.len());
        assert!(CLASSES.iter().all(|c| c.glyph >= FIRST_GLYPH));
    }

    #[test]
    fn no_class_is_both_grabbable_and_a_holder() {
        // Keeps grabbed objects child-free: nothing can rest on or in them.
        for c in CLASSES {
            let a = c.affordances;
            assert!(
                !(a.grabbable && (a.surface || a.container)),
                "{} is grabbable and a holder",
                c.name
            );
        }
    }
}
