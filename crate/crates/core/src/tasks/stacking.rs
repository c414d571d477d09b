//! Six colored blocks into a 3-2-1 pyramid on a rotated base.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use super::{local_to_world, EvalPoint, GoalSpec, TaskKind, TaskModule, TaskParams};
use crate::geometry::{normalize_angle, rotate, Pose2};
use crate::sim::render::{BASE, BLOCK_FIRST};
use crate::sim::{ObjectKind, RigidObject, Shape, WorldState};

pub const BLOCK_HALF: f64 = 0.025;
pub const STAGING_W: [f64; 2] = [-0.19, -0.12];
pub const STAGING_U: [f64; 3] = [-0.07, 0.0, 0.07];
pub const BASE_CENTER: [f64; 2] = [0.0, 0.08];
/// Offsets along the base axis and target levels, bottom row first.
pub const SLOTS: [(f64, u32); 6] = [
    (-0.052, 0),
    (0.0, 0),
    (0.052, 0),
    (-0.026, 1),
    (0.026, 1),
    (0.0, 2),
];
pub const POSITION_TOLERANCE: f64 = 0.25 * BLOCK_HALF;
pub const ANGLE_TOLERANCE: f64 = FRAC_PI_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingParams {
    /// World indices of the six blocks; block `i` has palette color `BLOCK_FIRST + i`.
    pub blocks: Vec<usize>,
    pub base: usize,
    pub base_theta: f64,
    /// Block (index into `blocks`) that belongs in each slot.
    pub goal_block: Vec<usize>,
}

pub(crate) fn init<R: Rng>(world: &mut WorldState, anchor: Pose2, owner: usize, rng: &mut R) -> TaskModule {
    let k: u32 = rng.gen_range(0..8);
    let base_theta = normalize_angle(k as f64 * FRAC_PI_4);

    let bc = local_to_world(&anchor, BASE_CENTER);
    let base = world.objects.len();
    world.objects.push(RigidObject {
        id: base,
        kind: ObjectKind::Base,
        shape: Shape::Rect {
            half_x: 0.032,
            half_y: 0.082,
        },
        color: BASE,
        pose: Pose2::new(bc[0], bc[1], base_theta),
        level: 0,
        owner,
    });

    let mut blocks = Vec::with_capacity(6);
    let mut i = 0u8;
    for w in STAGING_W {
        for u in STAGING_U {
            let p = local_to_world(&anchor, [u, w]);
            let idx = world.objects.len();
            world.objects.push(RigidObject {
                id: idx,
                kind: ObjectKind::Block,
                shape: Shape::Rect {
                    half_x: BLOCK_HALF,
                    half_y: BLOCK_HALF,
                },
                color: BLOCK_FIRST + i,
                pose: Pose2::new(p[0], p[1], 0.0),
                level: 0,
                owner,
            });
            blocks.push(idx);
            i += 1;
        }
    }
    let mut goal_block: Vec<usize> = (0..6).collect();
    goal_block.shuffle(rng);

    let eval_points = (0..6)
        .map(|s| EvalPoint {
            pose: slot_pose(bc, base_theta, s),
            tolerance: POSITION_TOLERANCE,
            tag: SLOTS[s].1,
        })
        .collect();

    TaskModule {
        kind: TaskKind::Stacking,
        anchor,
        params: TaskParams::Stacking(StackingParams {
            blocks,
            base,
            base_theta,
            goal_block,
        }),
        goal: GoalSpec {
            eval_points,
            sequential: false,
        },
        profile: TaskKind::Stacking.profile(),
        max_steps: 8,
        n: 6,
        owner,
    }
}

/// World pose of pyramid slot `s` on a base at `center` with angle `theta`.
pub fn slot_pose(center: [f64; 2], theta: f64, s: usize) -> Pose2 {
    let d = rotate([0.0, 1.0], theta);
    let off = SLOTS[s].0;
    Pose2::new(center[0] + d[0] * off, center[1] + d[1] * off, theta)
}

/// Orientation difference of two square footprints, folded into [0, π/4].
pub fn square_angle_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(FRAC_PI_2);
    d.min(FRAC_PI_2 - d)
}

impl StackingParams {
    pub(crate) fn satisfied(&self, module: &TaskModule, world: &WorldState) -> Vec<bool> {
        module
            .goal
            .eval_points
            .iter()
            .enumerate()
            .map(|(s, ep)| {
                let o = &world.objects[self.blocks[self.goal_block[s]]];
                o.level == ep.tag
                    && (o.pose.x - ep.pose.x).hypot(o.pose.y - ep.pose.y) <= ep.tolerance
                    && square_angle_error(o.pose.theta, ep.pose.theta) <= ANGLE_TOLERANCE
            })
            .collect()
    }

    pub(crate) fn apply_goal(&self, world: &mut WorldState) {
        let base = world.objects[self.base].pose;
        for s in 0..6 {
            let b = self.blocks[self.goal_block[s]];
            world.objects[b].pose = slot_pose(base.xy(), self.base_theta, s);
            world.objects[b].level = SLOTS[s].1;
        }
    }

    /// Slot a given block (index into `blocks`) belongs in.
    pub fn slot_of(&self, block: usize) -> usize {
        self.goal_block
            .iter()
            .position(|&b| b == block)
            .expect("goal_block is a permutation")
    }
}
