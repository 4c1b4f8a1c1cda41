//! Rasterized observations: the symbolic stand-in for camera pixels.
//!
//! The world lives on a grid of 6x6 room interiors separated by wall
//! columns. Floor positions are not stored in the scene graph; they are a
//! stable function of `(layout_id, seed, object id)`, so rendering is pure
//! and positions never drift when unrelated objects move.

use super::{class_by_name, gen_layout, mix_seed, AgentState, ObjectId, Placement, Posture, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const ROOM_W: usize = 6;
pub const ROOM_H: usize = 6;

pub const EMPTY_TILE: u16 = 0;
pub const WALL_TILE: u16 = 1;
pub const AGENT_TILE: u16 = 2;

/// Modifier-plane bits.
pub const MOD_OPEN: u8 = 1;
pub const MOD_POWERED: u8 = 2;
pub const MOD_AGENT: u8 = 4;
pub const MOD_SITTING: u8 = 8;

/// The three camera views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Auto,
    FirstPerson,
    FrontPerson,
}

impl View {
    pub const ALL: [View; 3] = [View::Auto, View::FirstPerson, View::FrontPerson];

    pub fn as_str(&self) -> &'static str {
        match self {
            View::Auto => "auto",
            View::FirstPerson => "first_person",
            View::FrontPerson => "front_person",
        }
    }
}

impl std::str::FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(View::Auto),
            "first_person" => Ok(View::FirstPerson),
            "front_person" => Ok(View::FrontPerson),
            other => Err(format!("unknown view `{other}`")),
        }
    }
}

/// Fixed raster dimensions per view.
pub struct ViewDims;

impl ViewDims {
    pub fn of(view: View) -> (usize, usize) {
        match view {
            View::Auto => (ROOM_W, ROOM_H),
            View::FirstPerson => (5, 5),
            View::FrontPerson => (7, 4),
        }
    }
}

/// A rendered observation: a base plane of tile codes (topmost visible
/// object, walls, the agent marker), a modifier plane of state bits, and
/// the glyphs of anything the agent holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub view: View,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u16>,
    pub modifiers: Vec<u8>,
    pub held: Vec<u16>,
}

impl Raster {
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.cells[y * self.width + x]
    }

    pub fn modifier_at(&self, x: usize, y: usize) -> u8 {
        self.modifiers[y * self.width + x]
    }

    pub fn contains_glyph(&self, glyph: u16) -> bool {
        self.cells.iter().any(|&c| c == glyph)
    }
}

fn room_origin(room: u8) -> (i64, i64) {
    (room as i64 * (ROOM_W as i64 + 1) + 1, 1)
}

fn grid_size(n_rooms: usize) -> (usize, usize) {
    (n_rooms * (ROOM_W + 1) + 1, ROOM_H + 2)
}

/// Stable floor anchors, computed from the pristine layout so they never
/// move when objects are grabbed or restacked.
fn home_cells(world: &SceneGraph) -> BTreeMap<ObjectId, (i64, i64)> {
    let pristine = gen_layout(world.layout_id, world.seed)
        .expect("scene graphs carry a valid layout id");
    let mut homes = BTreeMap::new();
    for room in 0..world.rooms.len() as u8 {
        let mut taken = vec![false; ROOM_W * ROOM_H];
        let (ox, oy) = room_origin(room);
        for (id, _) in pristine.objects.iter().filter(|(_, o)| o.room == room) {
            let start = (mix_seed(world.seed
                ^ ((world.layout_id as u64) << 40)
                ^ (*id as u64).wrapping_mul(0x5bd1e995))
                % (ROOM_W * ROOM_H) as u64) as usize;
            let mut slot = start;
            while taken[slot] {
                slot = (slot + 1) % (ROOM_W * ROOM_H);
            }
            taken[slot] = true;
            homes.insert(*id, (ox + (slot % ROOM_W) as i64, oy + (slot / ROOM_W) as i64));
        }
    }
    homes
}

fn spawn_cell(world: &SceneGraph, room: u8, homes: &BTreeMap<ObjectId, (i64, i64)>) -> (i64, i64) {
    let (ox, oy) = room_origin(room);
    let occupied: Vec<(i64, i64)> = homes
        .iter()
        .filter(|(_, &(x, y))| x >= ox && x < ox + ROOM_W as i64 && y >= oy && y < oy + ROOM_H as i64)
        .map(|(_, &c)| c)
        .collect();
    let start = (mix_seed(world.seed ^ ((world.layout_id as u64) << 40) ^ 0xa9e17 ^ room as u64)
        % (ROOM_W * ROOM_H) as u64) as usize;
    let mut slot = start;
    for _ in 0..ROOM_W * ROOM_H {
        let cell = (ox + (slot % ROOM_W) as i64, oy + (slot / ROOM_W) as i64);
        if !occupied.contains(&cell) {
            return cell;
        }
        slot = (slot + 1) % (ROOM_W * ROOM_H);
    }
    (ox, oy)
}

/// Where the agent stands: next to whatever it last walked to, otherwise
/// at the room's seeded spawn cell.
pub fn agent_cell(world: &SceneGraph, agent: &AgentState) -> (i64, i64) {
    let homes = home_cells(world);
    agent_cell_inner(world, agent, &homes)
}

fn agent_cell_inner(
    world: &SceneGraph,
    agent: &AgentState,
    homes: &BTreeMap<ObjectId, (i64, i64)>,
) -> (i64, i64) {
    let Some(near) = agent.near else {
        return spawn_cell(world, agent.room, homes);
    };
    let anchor = anchor_cell(world, near, homes);
    let Some(anchor) = anchor else {
        return spawn_cell(world, agent.room, homes);
    };
    let (ox, oy) = room_origin(agent.room);
    let in_room = |x: i64, y: i64| {
        x >= ox && x < ox + ROOM_W as i64 && y >= oy && y < oy + ROOM_H as i64
    };
    if !in_room(anchor.0, anchor.1) {
        return spawn_cell(world, agent.room, homes);
    }
    let taken: Vec<(i64, i64)> = homes.values().copied().collect();
    for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
        let cand = (anchor.0 + dx, anchor.1 + dy);
        if in_room(cand.0, cand.1) && !taken.contains(&cand) {
            return cand;
        }
    }
    anchor
}

/// The floor anchor for an object: its root's home cell, or its own home
/// cell while held.
pub fn object_anchor_cell(world: &SceneGraph, id: ObjectId) -> Option<(i64, i64)> {
    let homes = home_cells(world);
    anchor_cell(world, id, &homes)
}

fn anchor_cell(
    world: &SceneGraph,
    id: ObjectId,
    homes: &BTreeMap<ObjectId, (i64, i64)>,
) -> Option<(i64, i64)> {
    match world.root_of(id) {
        Some(root) => homes.get(&root).copied(),
        None => homes.get(&id).copied(),
    }
}

/// Unit direction the agent faces: toward its near-anchor, east by default.
fn facing(world: &SceneGraph, agent: &AgentState, homes: &BTreeMap<ObjectId, (i64, i64)>) -> (i64, i64) {
    let cell = agent_cell_inner(world, agent, homes);
    if let Some(near) = agent.near {
        if let Some(anchor) = anchor_cell(world, near, homes) {
            let (dx, dy) = (anchor.0 - cell.0, anchor.1 - cell.1);
            if dx.abs() >= dy.abs() && dx != 0 {
                return (dx.signum(), 0);
            }
            if dy != 0 {
                return (0, dy.signum());
            }
        }
    }
    (1, 0)
}

/// Topmost visible object of a pile rooted at `root`: the On-chain top.
/// Container contents stay hidden.
fn pile_top(world: &SceneGraph, root: ObjectId) -> ObjectId {
    let mut top = root;
    loop {
        match world.on_top_of(top).into_iter().max() {
            Some(next) => top = next,
            None => return top,
        }
    }
}

fn pile_bits(world: &SceneGraph, root: ObjectId) -> u8 {
    let mut bits = 0;
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let state = world.objects[&id].state;
        if state.open {
            bits |= MOD_OPEN;
        }
        if state.powered {
            bits |= MOD_POWERED;
        }
        stack.extend(world.on_top_of(id));
    }
    bits
}

struct GlobalGrid {
    width: usize,
    height: usize,
    cells: Vec<u16>,
    modifiers: Vec<u8>,
}

impl GlobalGrid {
    fn get(&self, x: i64, y: i64) -> (u16, u8) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return (WALL_TILE, 0);
        }
        let i = y as usize * self.width + x as usize;
        (self.cells[i], self.modifiers[i])
    }
}

fn build_global(
    world: &SceneGraph,
    agent: &AgentState,
    homes: &BTreeMap<ObjectId, (i64, i64)>,
) -> GlobalGrid {
    let (width, height) = grid_size(world.rooms.len());
    let mut cells = vec![EMPTY_TILE; width * height];
    let mut modifiers = vec![0u8; width * height];

    for y in 0..height {
        for x in 0..width {
            if y == 0 || y == height - 1 || x % (ROOM_W + 1) == 0 {
                cells[y * width + x] = WALL_TILE;
            }
        }
    }

    for (id, obj) in &world.objects {
        if obj.placement != Some(Placement::Floor) {
            continue;
        }
        let Some(&(x, y)) = homes.get(id) else { continue };
        let top = pile_top(world, *id);
        let glyph = class_by_name(&world.objects[&top].class).expect("registered class").glyph;
        let i = y as usize * width + x as usize;
        cells[i] = glyph;
        modifiers[i] |= pile_bits(world, *id);
    }

    let (ax, ay) = agent_cell_inner(world, agent, homes);
    let i = ay as usize * width + ax as usize;
    modifiers[i] |= MOD_AGENT;
    if matches!(agent.posture, Posture::Sitting(_)) {
        modifiers[i] |= MOD_SITTING;
    }
    if cells[i] == EMPTY_TILE {
        cells[i] = AGENT_TILE;
    }

    GlobalGrid { width, height, cells, modifiers }
}

fn held_glyphs(world: &SceneGraph, agent: &AgentState) -> Vec<u16> {
    let mut glyphs: Vec<u16> = agent
        .holding
        .iter()
        .map(|id| class_by_name(&world.objects[id].class).expect("registered class").glyph)
        .collect();
    glyphs.sort_unstable();
    glyphs
}

fn rotate_square(cells: &mut Vec<u16>, modifiers: &mut Vec<u8>, n: usize, quarter_turns: u64) {
    for _ in 0..(quarter_turns % 4) {
        let old_c = cells.clone();
        let old_m = modifiers.clone();
        for y in 0..n {
            for x in 0..n {
                // 90 degrees clockwise: (x, y) <- (y, n-1-x)
                cells[y * n + x] = old_c[(n - 1 - x) * n + y];
                modifiers[y * n + x] = old_m[(n - 1 - x) * n + y];
            }
        }
    }
}

/// Renders the requested view of the state. Deterministic, pure.
///
/// * `Auto`: the agent's current room, top-down, through a fixed camera
///   whose rotation is chosen by the world seed per room.
/// * `FirstPerson`: a 5x5 egocentric window shifted one cell toward the
///   facing direction.
/// * `FrontPerson`: the 7x4 band in front of the agent, rotated so that
///   forward is up.
pub fn render(world: &SceneGraph, agent: &AgentState, view: View) -> Raster {
    let homes = home_cells(world);
    let grid = build_global(world, agent, &homes);
    let (width, height) = ViewDims::of(view);
    let mut cells = vec![EMPTY_TILE; width * height];
    let mut modifiers = vec![0u8; width * height];

    match view {
        View::Auto => {
            let (ox, oy) = room_origin(agent.room);
            for y in 0..ROOM_H {
                for x in 0..ROOM_W {
                    let (c, m) = grid.get(ox + x as i64, oy + y as i64);
                    cells[y * ROOM_W + x] = c;
                    modifiers[y * ROOM_W + x] = m;
                }
            }
            let turns = mix_seed(world.seed ^ ((world.layout_id as u64) << 16) ^ agent.room as u64) % 4;
            rotate_square(&mut cells, &mut modifiers, ROOM_W, turns);
        }
        View::FirstPerson => {
            let (ax, ay) = agent_cell_inner(world, agent, &homes);
            let (fx, fy) = facing(world, agent, &homes);
            let (cx, cy) = (ax + fx, ay + fy);
            for y in 0..height {
                for x in 0..width {
                    let (c, m) = grid.get(cx + x as i64 - 2, cy + y as i64 - 2);
                    cells[y * width + x] = c;
                    modifiers[y * width + x] = m;
                }
            }
        }
        View::FrontPerson => {
            let (ax, ay) = agent_cell_inner(world, agent, &homes);
            let (fx, fy) = facing(world, agent, &homes);
            let (rx, ry) = (-fy, fx); // right-hand perpendicular
            for depth in 1..=height as i64 {
                for k in -3..=3i64 {
                    let gx = ax + fx * depth + rx * k;
                    let gy = ay + fy * depth + ry * k;
                    let (c, m) = grid.get(gx, gy);
                    let row = height - depth as usize; // nearest band at the bottom
                    let col = (k + 3) as usize;
                    cells[row * width + col] = c;
                    modifiers[row * width + col] = m;
                }
            }
        }
    }

    Raster { view, width, height, cells, modifiers, held: held_glyphs(world, agent) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actiondsl::{ActionStep, Verb};
    use crate::worldsim::{gen_layout, step};

    #[test]
    fn render_is_deterministic() {
        let world = gen_layout(2, 11).unwrap();
        let agent = AgentState::spawn();
        for view in View::ALL {
            assert_eq!(render(&world, &agent, view), render(&world, &agent, view));
        }
    }

    #[test]
    fn grabbed_object_moves_to_the_held_plane() {
        let world = gen_layout(1, 42).unwrap();
        let agent = AgentState::spawn();
        let groceries = world.find_class("groceries").unwrap();
        let glyph = class_by_name("groceries").unwrap().glyph;

        let walk = ActionStep::unary(Verb::Walk, "groceries", groceries);
        let (world, agent) = step(&world, &agent, &walk).unwrap();
        let before = render(&world, &agent, View::Auto);
        assert!(before.contains_glyph(glyph));
        assert!(before.held.is_empty());

        let grab = ActionStep::unary(Verb::Grab, "groceries", groceries);
        let (world, agent) = step(&world, &agent, &grab).unwrap();
        let after = render(&world, &agent, View::Auto);
        assert!(!after.contains_glyph(glyph));
        assert_eq!(after.held, vec![glyph]);
    }

    #[test]
    fn three_views_are_pairwise_distinct() {
        let world = gen_layout(1, 7).unwrap();
        let agent = AgentState::spawn();
        let a = render(&world, &agent, View::Auto);
        let f = render(&world, &agent, View::FirstPerson);
        let p = render(&world, &agent, View::FrontPerson);
        assert_ne!(a, f);
        assert_ne!(a, p);
        assert_ne!(f, p);
    }

    #[test]
    fn first_person_ignores_far_objects() {
        // Moving an object in another room must not change the egocentric crop.
        let world = gen_layout(1, 42).unwrap();
        let agent = AgentState::spawn(); // room 0 (kitchen)
        let before = render(&world, &agent, View::FirstPerson);

        let remote = world.find_class("remote").unwrap(); // livingroom
        let mut moved = world.clone();
        moved.objects.get_mut(&remote).unwrap().placement = None;
        let mut far_agent = agent.clone();
        far_agent.holding.push(remote);
        // Render the kitchen view from a state where only the livingroom
        // changed: same room, same near, same posture, nothing held counts
        // toward the crop cells themselves.
        let mut crop_agent = agent.clone();
        crop_agent.holding.clear();
        let after = render(&moved, &crop_agent, View::FirstPerson);
        assert_eq!(before.cells, after.cells);
        assert_eq!(before.modifiers, after.modifiers);
    }

    #[test]
    fn open_state_lands_in_the_modifier_plane() {
        let world = gen_layout(1, 42).unwrap();
        let agent = AgentState::spawn();
        let fridge = world.find_class("fridge").unwrap();
        let (world, agent) =
            step(&world, &agent, &ActionStep::unary(Verb::Walk, "fridge", fridge)).unwrap();
        let closed = render(&world, &agent, View::Auto);
        let (world, agent) =
            step(&world, &agent, &ActionStep::unary(Verb::Open, "fridge", fridge)).unwrap();
        let opened = render(&world, &agent, View::Auto);

        let glyph = class_by_name("fridge").unwrap().glyph;
        let idx = opened.cells.iter().position(|&c| c == glyph).unwrap();
        assert_eq!(opened.modifiers[idx] & MOD_OPEN, MOD_OPEN);
        assert_eq!(closed.modifiers[idx] & MOD_OPEN, 0);
    }

    #[test]
    fn agent_marker_present() {
        let world = gen_layout(4, 3).unwrap();
        let agent = AgentState::spawn();
        let raster = render(&world, &agent, View::Auto);
        let marked = raster
            .modifiers
            .iter()
            .filter(|&&m| m & MOD_AGENT == MOD_AGENT)
            .count();
        assert_eq!(marked, 1);
    }
}
