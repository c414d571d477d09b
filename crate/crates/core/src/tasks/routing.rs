//! An anchored cable routed around two or three pegs, alternating sides,
//! then stretched out past the last peg.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{local_to_world, EvalPoint, GoalSpec, TaskKind, TaskModule, TaskParams};
use crate::geometry::Pose2;
use crate::sim::render::{BEAD, BEAD_TERMINAL, PEG};
use crate::sim::{settle_chain, BeadChain, ObjectKind, RigidObject, Shape, WorldState};

pub const PEG_RADIUS: f64 = 0.015;
pub const BEAD_RADIUS: f64 = 0.005;
pub const SPACING: f64 = 0.01;
pub const ANCHOR: [f64; 2] = [0.0, -0.21];
pub const PEG_W_TWO: [f64; 2] = [-0.07, 0.05];
pub const PEG_W_THREE: [f64; 3] = [-0.1, -0.01, 0.08];
pub const PEG_W_JITTER: f64 = 0.01;
pub const PEG_U_RANGE: (f64, f64) = (0.015, 0.035);
pub const FINAL_OFFSET: f64 = 0.08;
pub const PEG_TOLERANCE: f64 = 1.5 * SPACING;
pub const FINAL_TOLERANCE: f64 = 2.0 * SPACING;
/// Cable length relative to the route through all eval points.
pub const SLACK_FACTOR: f64 = 1.1;
/// Serpentine rows of the initial cable, as |u|.
pub const LANES: [f64; 2] = [0.11, 0.14];
pub const LANE_END_W: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingParams {
    pub chain: usize,
    pub pegs: Vec<usize>,
    pub peg_centers: Vec<[f64; 2]>,
    /// Side (+1 or −1 along world x) on which the cable must pass each peg.
    pub sides: Vec<f64>,
    pub peg_radius: f64,
    /// Peg eval points followed by the final stretch point.
    pub route: Vec<[f64; 2]>,
    pub anchor: [f64; 2],
}

/// Length of the polyline through `pts`.
pub fn polyline_length(pts: &[[f64; 2]]) -> f64 {
    pts.windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// `n` points spaced `step` apart along the polyline `path`, starting at its
/// first vertex; extends past the last vertex along the final segment.
pub fn resample(path: &[[f64; 2]], step: f64, n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    let mut pos = path[0];
    out.push(pos);
    while out.len() < n {
        let mut need = step;
        loop {
            if seg + 1 >= path.len() {
                // extrapolate along the last segment direction
                let a = path[path.len().saturating_sub(2)];
                let b = path[path.len() - 1];
                let l = (b[0] - a[0]).hypot(b[1] - a[1]).max(1e-12);
                pos = [pos[0] + (b[0] - a[0]) / l * need, pos[1] + (b[1] - a[1]) / l * need];
                break;
            }
            let b = path[seg + 1];
            let rem = (b[0] - pos[0]).hypot(b[1] - pos[1]);
            if rem >= need {
                let t = need / rem;
                pos = [pos[0] + (b[0] - pos[0]) * t, pos[1] + (b[1] - pos[1]) * t];
                break;
            }
            need -= rem;
            pos = b;
            seg += 1;
        }
        out.push(pos);
    }
    out
}

pub(crate) fn init<R: Rng>(world: &mut WorldState, anchor: Pose2, owner: usize, rng: &mut R) -> TaskModule {
    let count = if rng.gen_bool(0.5) { 2 } else { 3 };
    let ws: Vec<f64> = if count == 2 { PEG_W_TWO.to_vec() } else { PEG_W_THREE.to_vec() };
    let first_side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut peg_local = Vec::with_capacity(count);
    let mut sides = Vec::with_capacity(count);
    for (k, w) in ws.iter().enumerate() {
        let side = if k % 2 == 0 { first_side } else { -first_side };
        let u = side * rng.gen_range(PEG_U_RANGE.0..=PEG_U_RANGE.1);
        let w = w + rng.gen_range(-PEG_W_JITTER..=PEG_W_JITTER);
        peg_local.push([u, w]);
        sides.push(side);
    }
    let mut pegs = Vec::with_capacity(count);
    let mut peg_centers = Vec::with_capacity(count);
    for pl in &peg_local {
        let c = local_to_world(&anchor, *pl);
        let idx = world.objects.len();
        world.objects.push(RigidObject {
            id: idx,
            kind: ObjectKind::Peg,
            shape: Shape::Circle { radius: PEG_RADIUS },
            color: PEG,
            pose: Pose2::new(c[0], c[1], 0.0),
            level: 0,
            owner,
        });
        pegs.push(idx);
        peg_centers.push(c);
    }

    let reach = PEG_RADIUS + BEAD_RADIUS;
    let mut route_local: Vec<[f64; 2]> = peg_local
        .iter()
        .zip(&sides)
        .map(|(p, s)| [p[0] + s * reach, p[1]])
        .collect();
    let last_w = peg_local.last().map(|p| p[1]).unwrap_or(0.0);
    route_local.push([0.0, last_w + FINAL_OFFSET]);

    let mut full = vec![ANCHOR];
    full.extend(route_local.iter().copied());
    let wrap_allowance = count as f64 * PI * reach / 2.0;
    let length = SLACK_FACTOR * (polyline_length(&full) + wrap_allowance);
    let n = (length / SPACING).ceil() as usize + 1;

    // serpentine: out to the first lane, along it, turn, back along the second
    let lane = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let path_local = [
        ANCHOR,
        [lane * LANES[0], ANCHOR[1]],
        [lane * LANES[0], LANE_END_W],
        [lane * LANES[1], LANE_END_W],
        [lane * LANES[1], ANCHOR[1]],
    ];
    let path: Vec<[f64; 2]> = path_local.iter().map(|p| local_to_world(&anchor, *p)).collect();
    let beads = resample(&path, SPACING, n);
    let mut colors = vec![BEAD; n];
    colors[n - 1] = BEAD_TERMINAL;
    let chain = world.chains.len();
    let loose = BeadChain {
        beads,
        spacing: SPACING,
        bead_radius: BEAD_RADIUS,
        closed: false,
        anchored: Some(0),
        colors,
        owner,
    };
    world
        .chains
        .push(settle_chain(&loose, &world.peg_obstacles(), super::chaining::INIT_SETTLE_ITERATIONS).chain);

    let route: Vec<[f64; 2]> = route_local.iter().map(|p| local_to_world(&anchor, *p)).collect();
    let mut eval_points: Vec<EvalPoint> = route[..count]
        .iter()
        .enumerate()
        .map(|(k, p)| EvalPoint {
            pose: Pose2::new(p[0], p[1], 0.0),
            tolerance: PEG_TOLERANCE,
            tag: k as u32,
        })
        .collect();
    eval_points.push(EvalPoint {
        pose: Pose2::new(route[count][0], route[count][1], 0.0),
        tolerance: FINAL_TOLERANCE,
        tag: count as u32,
    });

    TaskModule {
        kind: TaskKind::Routing,
        anchor,
        params: TaskParams::Routing(RoutingParams {
            chain,
            pegs,
            peg_centers,
            sides,
            peg_radius: PEG_RADIUS,
            route,
            anchor: local_to_world(&anchor, ANCHOR),
        }),
        goal: GoalSpec {
            eval_points,
            sequential: true,
        },
        profile: TaskKind::Routing.profile(),
        max_steps: count + 4,
        n: count,
        owner,
    }
}

impl RoutingParams {
    pub fn peg_count(&self) -> usize {
        self.pegs.len()
    }

    /// Polyline from the anchor through every eval point.
    pub fn route_polyline(&self) -> Vec<[f64; 2]> {
        let mut v = vec![self.anchor];
        v.extend(self.route.iter().copied());
        v
    }

    pub(crate) fn satisfied(&self, module: &TaskModule, world: &WorldState) -> Vec<bool> {
        let chain = &world.chains[self.chain];
        let n = self.peg_count();
        let mut out: Vec<bool> = module.goal.eval_points[..n]
            .iter()
            .map(|ep| {
                chain
                    .beads
                    .iter()
                    .any(|b| (b[0] - ep.pose.x).hypot(b[1] - ep.pose.y) <= ep.tolerance)
            })
            .collect();
        let fin = &module.goal.eval_points[n];
        let t = chain.beads[chain.beads.len() - 1];
        out.push((t[0] - fin.pose.x).hypot(t[1] - fin.pose.y) <= fin.tolerance);
        out
    }

    pub(crate) fn apply_goal(&self, world: &mut WorldState) {
        let chain = &mut world.chains[self.chain];
        let n = chain.beads.len();
        let path = self.route_polyline();
        let step = polyline_length(&path) / (n - 1) as f64;
        chain.beads = resample(&path, step, n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_walks_corners() {
        let path = [[0.0, 0.0], [0.0, 0.03], [0.02, 0.03]];
        let pts = resample(&path, 0.01, 7);
        let expect = [
            [0.0, 0.0],
            [0.0, 0.01],
            [0.0, 0.02],
            [0.0, 0.03],
            [0.01, 0.03],
            [0.02, 0.03],
            [0.03, 0.03],
        ];
        for (a, b) in pts.iter().zip(expect.iter()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}
