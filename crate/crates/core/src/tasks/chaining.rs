//! A closed bead loop to be wrapped around two pegs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use super::{local_to_world, EvalPoint, GoalSpec, TaskKind, TaskModule, TaskParams};
use crate::geometry::{rotate, Pose2};
use crate::sim::chain::winding_number;
use crate::sim::render::{BEAD, PEG};
use crate::sim::{settle_chain, BeadChain, ObjectKind, RigidObject, Shape, WorldState};

pub const DISTANCES: [f64; 2] = [0.09, 0.12];
pub const RADII: [f64; 2] = [0.015, 0.02];
pub const BEAD_RADIUS: f64 = 0.005;
pub const SPACING: f64 = 0.01;
pub const CHECK_TOLERANCE: f64 = 1.5 * SPACING;
/// Clearance between the initial loop and each peg.
pub const INITIAL_CLEARANCE: f64 = 0.01;
pub(crate) const INIT_SETTLE_ITERATIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainingParams {
    pub chain: usize,
    pub pegs: [usize; 2],
    pub peg_centers: [[f64; 2]; 2],
    pub peg_radius: f64,
    pub distance: f64,
    pub theta: f64,
    /// Unit vector from peg 0 to peg 1.
    pub axis: [f64; 2],
    /// Unit normal to the peg axis.
    pub normal: [f64; 2],
    pub center: [f64; 2],
}

/// Closed stadium polyline: two half circles of radius `rad` around `p`, `q`
/// joined by straight sides, sampled at `n` evenly spaced points. Points are
/// ordered counter-clockwise.
pub fn stadium(p: [f64; 2], q: [f64; 2], rad: f64, n: usize) -> Vec<[f64; 2]> {
    let d = (q[0] - p[0]).hypot(q[1] - p[1]);
    let ax = if d > 0.0 {
        [(q[0] - p[0]) / d, (q[1] - p[1]) / d]
    } else {
        [1.0, 0.0]
    };
    let nm = [-ax[1], ax[0]];
    let total = 2.0 * d + 2.0 * PI * rad;
    (0..n)
        .map(|i| {
            let mut s = total * i as f64 / n as f64;
            // side from p to q at offset −nm
            if s < d {
                return [p[0] + ax[0] * s - nm[0] * rad, p[1] + ax[1] * s - nm[1] * rad];
            }
            s -= d;
            let arc = PI * rad;
            if s < arc {
                let a = -PI / 2.0 + s / rad;
                let v = [a.cos(), a.sin()];
                return [
                    q[0] + (ax[0] * v[0] + nm[0] * v[1]) * rad,
                    q[1] + (ax[1] * v[0] + nm[1] * v[1]) * rad,
                ];
            }
            s -= arc;
            if s < d {
                return [q[0] - ax[0] * s + nm[0] * rad, q[1] - ax[1] * s + nm[1] * rad];
            }
            s -= d;
            let a = PI / 2.0 + s / rad;
            [
                p[0] + (ax[0] * a.cos() + nm[0] * a.sin()) * rad,
                p[1] + (ax[1] * a.cos() + nm[1] * a.sin()) * rad,
            ]
        })
        .collect()
}

pub fn wrap_perimeter(distance: f64, peg_radius: f64) -> f64 {
    2.0 * distance + 2.0 * PI * (peg_radius + BEAD_RADIUS)
}

pub(crate) fn init<R: Rng>(world: &mut WorldState, anchor: Pose2, owner: usize, rng: &mut R) -> TaskModule {
    let distance = DISTANCES[rng.gen_range(0..2)];
    let peg_radius = RADII[rng.gen_range(0..2)];
    let theta = rng.gen_range(-FRAC_PI_4..=FRAC_PI_4);
    let extra: usize = rng.gen_range(1..=2);
    let n = ((wrap_perimeter(distance, peg_radius) / SPACING).ceil() as usize + extra).clamp(28, 42);

    let center = local_to_world(&anchor, [0.0, 0.0]);
    let axis = rotate([0.0, 1.0], anchor.theta + theta);
    let normal = rotate([1.0, 0.0], anchor.theta + theta);
    let peg_centers = [
        [center[0] - axis[0] * distance / 2.0, center[1] - axis[1] * distance / 2.0],
        [center[0] + axis[0] * distance / 2.0, center[1] + axis[1] * distance / 2.0],
    ];
    let mut pegs = [0usize; 2];
    for (k, pc) in peg_centers.iter().enumerate() {
        pegs[k] = world.objects.len();
        world.objects.push(RigidObject {
            id: pegs[k],
            kind: ObjectKind::Peg,
            shape: Shape::Circle { radius: peg_radius },
            color: PEG,
            pose: Pose2::new(pc[0], pc[1], 0.0),
            level: 0,
            owner,
        });
    }

    // thin loop between the pegs, elongated along the normal
    let half_width = distance / 2.0 - peg_radius - BEAD_RADIUS - INITIAL_CLEARANCE;
    let straight = (n as f64 * SPACING - 2.0 * PI * half_width) / 2.0;
    let a = [center[0] - normal[0] * straight / 2.0, center[1] - normal[1] * straight / 2.0];
    let b = [center[0] + normal[0] * straight / 2.0, center[1] + normal[1] * straight / 2.0];
    let beads = stadium(a, b, half_width, n);

    let chain = world.chains.len();
    let loose = BeadChain {
        beads,
        spacing: SPACING,
        bead_radius: BEAD_RADIUS,
        closed: true,
        anchored: None,
        colors: vec![BEAD; n],
        owner,
    };
    // arc chords come out short of the spacing; relax before use
    world
        .chains
        .push(settle_chain(&loose, &world.peg_obstacles(), INIT_SETTLE_ITERATIONS).chain);

    let eval_points = peg_centers
        .iter()
        .enumerate()
        .map(|(k, pc)| EvalPoint {
            pose: Pose2::new(pc[0], pc[1], 0.0),
            tolerance: CHECK_TOLERANCE,
            tag: k as u32,
        })
        .collect();

    TaskModule {
        kind: TaskKind::Chaining,
        anchor,
        params: TaskParams::Chaining(ChainingParams {
            chain,
            pegs,
            peg_centers,
            peg_radius,
            distance,
            theta,
            axis,
            normal,
            center,
        }),
        goal: GoalSpec {
            eval_points,
            sequential: false,
        },
        profile: TaskKind::Chaining.profile(),
        max_steps: 4,
        n: 2,
        owner,
    }
}

impl ChainingParams {
    /// The two wrap check points of peg `k`, on either side across the axis.
    pub fn check_points(&self, k: usize) -> [[f64; 2]; 2] {
        let p = self.peg_centers[k];
        let d = self.peg_radius + BEAD_RADIUS;
        [
            [p[0] + self.normal[0] * d, p[1] + self.normal[1] * d],
            [p[0] - self.normal[0] * d, p[1] - self.normal[1] * d],
        ]
    }

    /// Outward unit direction of peg `k` along the axis.
    pub fn outward(&self, k: usize) -> [f64; 2] {
        if k == 0 {
            [-self.axis[0], -self.axis[1]]
        } else {
            self.axis
        }
    }

    pub fn peg_wrapped(&self, chain: &BeadChain, k: usize) -> bool {
        let near = |c: [f64; 2]| {
            chain
                .beads
                .iter()
                .any(|b| (b[0] - c[0]).hypot(b[1] - c[1]) <= CHECK_TOLERANCE)
        };
        self.check_points(k).iter().all(|c| near(*c))
            && winding_number(&chain.beads, self.peg_centers[k]).abs() == 1
    }

    pub(crate) fn satisfied(&self, _module: &TaskModule, world: &WorldState) -> Vec<bool> {
        let chain = &world.chains[self.chain];
        (0..2).map(|k| self.peg_wrapped(chain, k)).collect()
    }

    pub(crate) fn apply_goal(&self, world: &mut WorldState) {
        let chain = &mut world.chains[self.chain];
        let n = chain.beads.len();
        let rad = ((n as f64 * chain.spacing - 2.0 * self.distance) / (2.0 * PI))
            .max(self.peg_radius + BEAD_RADIUS);
        chain.beads = stadium(self.peg_centers[0], self.peg_centers[1], rad, n);
    }
}
