//! Nine disks onto a 3×3 grid on a plate, with parity zones.
//!
//! Grid point `k = 3i + j` has parity `(i + j) % 2`. Even points (corners and
//! center) take the five disks staged left of the plate, odd points the four
//! staged right. Each parity has its own disk size, drawn big or small.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{local_to_world, EvalPoint, GoalSpec, TaskKind, TaskModule, TaskParams};
use crate::geometry::Pose2;
use crate::sim::render::{DISK, PLATE};
use crate::sim::{ObjectKind, RigidObject, Shape, WorldState};

pub const BIG_RADIUS: f64 = 0.025;
pub const SMALL_RADIUS: f64 = 0.02;
pub const PLATE_HALF: f64 = 0.1;
pub const GRID_STEP: f64 = 0.065;
pub const STAGING_U: f64 = 0.135;
pub const STAGING_W: (f64, f64) = (0.13, 0.22);
/// Minimum clearance between staged disks.
pub const STAGING_GAP: f64 = 0.006;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacingParams {
    pub even_radius: f64,
    pub odd_radius: f64,
    /// World object indices of the nine disks.
    pub disks: Vec<usize>,
    /// Parity of each disk (0 even, 1 odd), aligned with `disks`.
    pub parity: Vec<u8>,
    /// Grid point assigned to each disk by the demonstrator.
    pub assignment: Vec<usize>,
    pub plate: usize,
}

pub fn grid_parity(k: usize) -> u8 {
    ((k / 3 + k % 3) % 2) as u8
}

/// Local coordinates of grid point `k`.
pub fn grid_local(k: usize) -> [f64; 2] {
    let i = (k / 3) as f64 - 1.0;
    let j = (k % 3) as f64 - 1.0;
    [i * GRID_STEP, j * GRID_STEP]
}

pub(crate) fn init<R: Rng>(world: &mut WorldState, anchor: Pose2, owner: usize, rng: &mut R) -> TaskModule {
    let even_radius = if rng.gen_bool(0.5) { BIG_RADIUS } else { SMALL_RADIUS };
    let odd_radius = if rng.gen_bool(0.5) { BIG_RADIUS } else { SMALL_RADIUS };

    let plate = world.objects.len();
    world.objects.push(RigidObject {
        id: plate,
        kind: ObjectKind::Plate,
        shape: Shape::Rect {
            half_x: PLATE_HALF,
            half_y: PLATE_HALF,
        },
        color: PLATE,
        pose: Pose2::new(anchor.x, anchor.y, anchor.theta),
        level: 0,
        owner,
    });

    let even = stage(rng, 5, even_radius, -1.0);
    let odd = stage(rng, 4, odd_radius, 1.0);

    let mut disks = Vec::with_capacity(9);
    let mut parity = Vec::with_capacity(9);
    for (par, radius, spots) in [(0u8, even_radius, &even), (1u8, odd_radius, &odd)] {
        for uw in spots.iter() {
            let p = local_to_world(&anchor, *uw);
            let idx = world.objects.len();
            world.objects.push(RigidObject {
                id: idx,
                kind: ObjectKind::Disk,
                shape: Shape::Circle { radius },
                color: DISK,
                pose: Pose2::new(p[0], p[1], 0.0),
                level: 0,
                owner,
            });
            disks.push(idx);
            parity.push(par);
        }
    }

    // random goal assignment within each parity zone
    let mut even_pts: Vec<usize> = (0..9).filter(|&k| grid_parity(k) == 0).collect();
    let mut odd_pts: Vec<usize> = (0..9).filter(|&k| grid_parity(k) == 1).collect();
    even_pts.shuffle(rng);
    odd_pts.shuffle(rng);
    let assignment: Vec<usize> = even_pts.into_iter().chain(odd_pts).collect();

    let eval_points = (0..9)
        .map(|k| {
            let p = local_to_world(&anchor, grid_local(k));
            let r = if grid_parity(k) == 0 { even_radius } else { odd_radius };
            EvalPoint {
                pose: Pose2::new(p[0], p[1], 0.0),
                tolerance: r / 2.0,
                tag: grid_parity(k) as u32,
            }
        })
        .collect();

    TaskModule {
        kind: TaskKind::Placing,
        anchor,
        params: TaskParams::Placing(PlacingParams {
            even_radius,
            odd_radius,
            disks,
            parity,
            assignment,
            plate,
        }),
        goal: GoalSpec {
            eval_points,
            sequential: false,
        },
        profile: TaskKind::Placing.profile(),
        max_steps: 11,
        n: 9,
        owner,
    }
}

/// Rejection-samples `count` non-overlapping disk centers on one side of the plate.
fn stage<R: Rng>(rng: &mut R, count: usize, radius: f64, side: f64) -> Vec<[f64; 2]> {
    let min_d = 2.0 * radius + STAGING_GAP;
    loop {
        let mut spots: Vec<[f64; 2]> = Vec::with_capacity(count);
        let mut tries = 0;
        while spots.len() < count && tries < 2000 {
            tries += 1;
            let u = rng.gen_range(-STAGING_U..=STAGING_U);
            let w = side * rng.gen_range(STAGING_W.0..=STAGING_W.1);
            if spots.iter().all(|s| (s[0] - u).hypot(s[1] - w) >= min_d) {
                spots.push([u, w]);
            }
        }
        if spots.len() == count {
            return spots;
        }
    }
}

impl PlacingParams {
    pub fn radius_of(&self, parity: u8) -> f64 {
        if parity == 0 {
            self.even_radius
        } else {
            self.odd_radius
        }
    }

    pub(crate) fn satisfied(&self, module: &TaskModule, world: &WorldState) -> Vec<bool> {
        module
            .goal
            .eval_points
            .iter()
            .map(|ep| {
                self.disks.iter().zip(&self.parity).any(|(&d, &par)| {
                    let o = &world.objects[d];
                    par as u32 == ep.tag
                        && o.level == 0
                        && (o.pose.x - ep.pose.x).hypot(o.pose.y - ep.pose.y) <= ep.tolerance
                })
            })
            .collect()
    }

    pub(crate) fn apply_goal(&self, world: &mut WorldState) {
        let anchor = super::slot_anchor(world.objects[self.plate].owner);
        for (&d, &k) in self.disks.iter().zip(&self.assignment) {
            let p = local_to_world(&anchor, grid_local(k));
            world.objects[d].pose = Pose2::new(p[0], p[1], 0.0);
            world.objects[d].level = 0;
        }
    }

    /// Goal point the demonstrator assigned to the disk at world index `d`.
    pub fn assigned_point(&self, d: usize) -> Option<usize> {
        self.disks.iter().position(|&x| x == d).map(|i| self.assignment[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WorkspaceMap;
    use crate::tasks::{compose, slot_anchor, world_to_local, ProblemSpec};

    #[test]
    fn nine_disks_five_left_four_right() {
        for seed in 0..50 {
            let (p, w, _) = compose(&ProblemSpec::single(TaskKind::Placing), seed, WorkspaceMap::working()).unwrap();
            let TaskParams::Placing(pp) = &p.modules[0].params else {
                panic!()
            };
            assert_eq!(pp.disks.len(), 9);
            let anchor = slot_anchor(0);
            let left = pp
                .disks
                .iter()
                .filter(|&&d| world_to_local(&anchor, w.objects[d].pose.xy())[1] < 0.0)
                .count();
            assert_eq!(left, 5);
        }
    }

    #[test]
    fn grid_parities() {
        let even: Vec<usize> = (0..9).filter(|&k| grid_parity(k) == 0).collect();
        assert_eq!(even, vec![0, 2, 4, 6, 8]);
    }
}
