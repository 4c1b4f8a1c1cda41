//! The on-disk record shape: one timestep of one episode in one view,
//! with the raster stored run-length encoded.

use crate::worldsim::{Raster, View, ViewDims};
use serde::{Deserialize, Serialize};

/// Run-length encoded raster planes. Counts are u16; a plane is a list of
/// `[count, value]` pairs in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterRle {
    pub cells: Vec<(u16, u16)>,
    pub modifiers: Vec<(u16, u8)>,
    pub held: Vec<u16>,
}

fn rle<T: Copy + PartialEq>(values: &[T]) -> Vec<(u16, T)> {
    let mut out: Vec<(u16, T)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((count, last)) if *last == v && *count < u16::MAX => *count += 1,
            _ => out.push((1, v)),
        }
    }
    out
}

fn unrle<T: Copy>(pairs: &[(u16, T)]) -> Vec<T> {
    let mut out = Vec::new();
    for &(count, v) in pairs {
        out.extend(std::iter::repeat(v).take(count as usize));
    }
    out
}

impl RasterRle {
    pub fn encode(raster: &Raster) -> RasterRle {
        RasterRle {
            cells: rle(&raster.cells),
            modifiers: rle(&raster.modifiers),
            held: raster.held.clone(),
        }
    }

    pub fn decode(&self, view: View) -> Raster {
        let (width, height) = ViewDims::of(view);
        Raster {
            view,
            width,
            height,
            cells: unrle(&self.cells),
            modifiers: unrle(&self.modifiers),
            held: self.held.clone(),
        }
    }
}

/// One dataset line: everything needed to reconstruct the training triple
/// (observation, caption, expert action) for one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub layout_id: u8,
    /// The episode's world seed; with `layout_id` it identifies the episode.
    pub seed: u64,
    /// Task name from the layout's task list.
    pub task: String,
    /// The task's natural-language description.
    pub task_text: String,
    /// Step index within the expert plan.
    pub t: usize,
    pub view: View,
    pub raster: RasterRle,
    /// Oracle caption of the state before the action.
    pub caption: String,
    /// Expert action in canonical DSL text.
    pub action: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{gen_layout, render, AgentState};
    use proptest::prelude::*;

    #[test]
    fn rendered_rasters_round_trip() {
        let world = gen_layout(3, 17).unwrap();
        let agent = AgentState::spawn();
        for view in View::ALL {
            let raster = render(&world, &agent, view);
            let decoded = RasterRle::encode(&raster).decode(view);
            assert_eq!(decoded, raster);
        }
    }

    proptest! {
        #[test]
        fn rle_round_trips(values in prop::collection::vec(0u16..32, 0..200)) {
            prop_assert_eq!(unrle(&rle(&values)), values);
        }
    }
}
