//! Quasi-static 2-D tabletop world.
//!
//! Rigid objects carry an integer stacking level; bead chains lie on the
//! table and are relaxed after every move. A step is one suction-style
//! pick-and-place: the topmost movable entity under the pick pose is carried
//! to the place pose with the relative rotation applied.

pub mod chain;
pub mod render;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{rotate, Pose2, WorkspaceMap};
pub use chain::{settle_chain, settle_chain_with, BeadChain, Circle, SettleOptions, SettleOutcome};
pub use render::{palette, render_topdown, PALETTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Disk,
    Block,
    Peg,
    Plate,
    Base,
}

impl ObjectKind {
    pub fn is_movable(self) -> bool {
        matches!(self, ObjectKind::Disk | ObjectKind::Block)
    }

    fn code(self) -> u8 {
        match self {
            ObjectKind::Disk => 0,
            ObjectKind::Block => 1,
            ObjectKind::Peg => 2,
            ObjectKind::Plate => 3,
            ObjectKind::Base => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Circle { radius: f64 },
    Rect { half_x: f64, half_y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidObject {
    pub id: usize,
    pub kind: ObjectKind,
    pub shape: Shape,
    pub color: u8,
    pub pose: Pose2,
    /// Stacking level, 0 on the table.
    pub level: u32,
    /// Index of the owning task module.
    pub owner: usize,
}

impl RigidObject {
    /// Euclidean distance from `p` to the footprint (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        shape_distance(&self.shape, &self.pose, p)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.distance_to(p) <= 0.0
    }

    /// Radius of a circle around the pose enclosing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius } => radius,
            Shape::Rect { half_x, half_y } => half_x.hypot(half_y),
        }
    }
}

pub fn shape_distance(shape: &Shape, pose: &Pose2, p: [f64; 2]) -> f64 {
    match *shape {
        Shape::Circle { radius } => {
            ((p[0] - pose.x).hypot(p[1] - pose.y) - radius).max(0.0)
        }
        Shape::Rect { half_x, half_y } => {
            let l = rotate([p[0] - pose.x, p[1] - pose.y], -pose.theta);
            let dx = (l[0].abs() - half_x).max(0.0);
            let dy = (l[1].abs() - half_y).max(0.0);
            dx.hypot(dy)
        }
    }
}

fn shrink(shape: &Shape, m: f64) -> Shape {
    match *shape {
        Shape::Circle { radius } => Shape::Circle {
            radius: (radius - m).max(1e-9),
        },
        Shape::Rect { half_x, half_y } => Shape::Rect {
            half_x: (half_x - m).max(1e-9),
            half_y: (half_y - m).max(1e-9),
        },
    }
}

fn rect_corners(pose: &Pose2, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    [[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]].map(|c| pose.transform_point(c))
}

fn project(points: &[[f64; 2]], axis: [f64; 2]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        let v = p[0] * axis[0] + p[1] * axis[1];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Whether two footprints overlap with positive area.
pub fn footprints_overlap(a: (&Shape, &Pose2), b: (&Shape, &Pose2)) -> bool {
    match (*a.0, *b.0) {
        (Shape::Circle { radius: ra }, Shape::Circle { radius: rb }) => {
            (a.1.x - b.1.x).hypot(a.1.y - b.1.y) < ra + rb
        }
        (Shape::Circle { radius }, Shape::Rect { .. }) => shape_distance(b.0, b.1, a.1.xy()) < radius,
        (Shape::Rect { .. }, Shape::Circle { radius }) => shape_distance(a.0, a.1, b.1.xy()) < radius,
        (Shape::Rect { half_x: ax, half_y: ay }, Shape::Rect { half_x: bx, half_y: by }) => {
            let ca = rect_corners(a.1, ax, ay);
            let cb = rect_corners(b.1, bx, by);
            let axes = [
                rotate([1.0, 0.0], a.1.theta),
                rotate([0.0, 1.0], a.1.theta),
                rotate([1.0, 0.0], b.1.theta),
                rotate([0.0, 1.0], b.1.theta),
            ];
            axes.iter().all(|&ax| {
                let (lo_a, hi_a) = project(&ca, ax);
                let (lo_b, hi_b) = project(&cb, ax);
                hi_a > lo_b && hi_b > lo_a
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftClass {
    LowSlow,
    HighFast,
}

/// Transport style of a primitive. `drag_coupling` is the fraction of the
/// gripper displacement passed to each successive lifted neighbour of a
/// grasped bead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveProfile {
    pub lift: LiftClass,
    pub drag_coupling: f64,
}

impl PrimitiveProfile {
    pub fn low_slow() -> Self {
        Self {
            lift: LiftClass::LowSlow,
            drag_coupling: 0.25,
        }
    }

    pub fn high_fast() -> Self {
        Self {
            lift: LiftClass::HighFast,
            drag_coupling: 0.5,
        }
    }

    /// High/fast transport in a world with no chains has nothing to drag.
    pub fn high_fast_rigid() -> Self {
        Self {
            lift: LiftClass::HighFast,
            drag_coupling: 0.0,
        }
    }
}

/// Physical constants of the world. Recorded in dataset manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub block_height: f64,
    pub bead_height: f64,
    /// Rendered height of flat fixtures (plates, stacking bases).
    pub fixture_height: f64,
    pub grasp_radius: f64,
    pub eps_chain: f64,
    pub eps_pen: f64,
    pub settle_iterations: usize,
    /// Beads within this index distance of a grasped bead are lifted with it.
    pub lift_span: usize,
    /// Footprints are shrunk by this much before stacking overlap tests.
    pub stack_margin: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            block_height: 0.02,
            bead_height: 0.008,
            fixture_height: 0.004,
            grasp_radius: 0.009375,
            eps_chain: chain::DEFAULT_EPS_CHAIN,
            eps_pen: chain::DEFAULT_EPS_PEN,
            settle_iterations: 1024,
            lift_span: 2,
            stack_margin: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<RigidObject>,
    pub chains: Vec<BeadChain>,
    pub map: WorkspaceMap,
    pub params: SimParams,
    pub seed: u64,
}

/// A two-pose pick-and-place action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub pick: Pose2,
    pub place: Pose2,
}

impl Action {
    pub fn new(pick: Pose2, place: Pose2) -> Self {
        Self { pick, place }
    }

    /// Place rotation relative to the pick.
    pub fn delta_theta(&self) -> f64 {
        crate::geometry::normalize_angle(self.place.theta - self.pick.theta)
    }
}

/// What a step grasped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grasp {
    Miss,
    Object { index: usize },
    Bead { chain: usize, bead: usize },
}

impl WorldState {
    pub fn empty(map: WorkspaceMap) -> Self {
        Self {
            objects: Vec::new(),
            chains: Vec::new(),
            map,
            params: SimParams::default(),
            seed: 0,
        }
    }

    /// Circles that beads must stay out of.
    pub fn peg_obstacles(&self) -> Vec<Circle> {
        self.objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Peg)
            .filter_map(|o| match o.shape {
                Shape::Circle { radius } => Some(Circle {
                    center: o.pose.xy(),
                    radius,
                }),
                Shape::Rect { .. } => None,
            })
            .collect()
    }

    pub fn object_top(&self, o: &RigidObject) -> f64 {
        if o.kind.is_movable() || o.kind == ObjectKind::Peg {
            (o.level as f64 + 1.0) * self.params.block_height
        } else {
            self.params.fixture_height
        }
    }

    /// The entity a suction pick at `p` would attach to.
    pub fn grasp_at(&self, p: [f64; 2]) -> Grasp {
        let r = self.params.grasp_radius;
        // (top height, distance, grasp)
        let mut best: Option<(f64, f64, Grasp)> = None;
        let mut consider = |h: f64, d: f64, g: Grasp| {
            let better = match best {
                None => true,
                Some((bh, bd, _)) => h > bh + 1e-12 || ((h - bh).abs() <= 1e-12 && d < bd),
            };
            if better {
                best = Some((h, d, g));
            }
        };
        for (i, o) in self.objects.iter().enumerate() {
            if !o.kind.is_movable() {
                continue;
            }
            let d = o.distance_to(p);
            if d <= r {
                consider(self.object_top(o), d, Grasp::Object { index: i });
            }
        }
        for (ci, c) in self.chains.iter().enumerate() {
            for (bi, b) in c.beads.iter().enumerate() {
                if Some(bi) == c.anchored {
                    continue;
                }
                let d = (b[0] - p[0]).hypot(b[1] - p[1]);
                if d <= r + c.bead_radius {
                    consider(self.params.bead_height, d, Grasp::Bead { chain: ci, bead: bi });
                }
            }
        }
        best.map(|b| b.2).unwrap_or(Grasp::Miss)
    }

    /// Executes one pick-and-place. Misses leave the world unchanged.
    pub fn step_pick_place(
        &self,
        pick: &Pose2,
        place: &Pose2,
        profile: &PrimitiveProfile,
    ) -> (WorldState, Grasp) {
        let mut next = self.clone();
        if !pick.is_finite() || !place.is_finite() || !self.map.contains_world(pick.xy()) {
            return (next, Grasp::Miss);
        }
        let grasp = self.grasp_at(pick.xy());
        match grasp {
            Grasp::Miss => {}
            Grasp::Object { index } => {
                let dtheta = place.theta - pick.theta;
                let o = &mut next.objects[index];
                let rel = rotate([o.pose.x - pick.x, o.pose.y - pick.y], dtheta);
                let target = next.map.clamp_world([place.x + rel[0], place.y + rel[1]], 0.0);
                o.pose = Pose2::new(target[0], target[1], o.pose.theta + dtheta);
                next.settle_levels(Some(index));
            }
            Grasp::Bead { chain, bead } => {
                let target = next.map.clamp_world(place.xy(), 0.0);
                next.move_bead(chain, bead, target, profile);
            }
        }
        (next, grasp)
    }

    pub fn apply(&self, action: &Action, profile: &PrimitiveProfile) -> (WorldState, Grasp) {
        self.step_pick_place(&action.pick, &action.place, profile)
    }

    /// Recomputes stacking levels bottom-up. `moved` (if any) is treated as
    /// placed last, on top of whatever it overlaps.
    pub fn settle_levels(&mut self, moved: Option<usize>) {
        let mut order: Vec<usize> = (0..self.objects.len())
            .filter(|&i| self.objects[i].kind.is_movable() && Some(i) != moved)
            .collect();
        order.sort_by_key(|&i| (self.objects[i].level, i));
        if let Some(m) = moved {
            order.push(m);
        }
        let margin = self.params.stack_margin;
        let mut done: Vec<usize> = Vec::with_capacity(order.len());
        for &i in &order {
            let si = shrink(&self.objects[i].shape, margin);
            let pi = self.objects[i].pose;
            let mut level = 0u32;
            for &j in &done {
                let sj = shrink(&self.objects[j].shape, margin);
                if footprints_overlap((&si, &pi), (&sj, &self.objects[j].pose)) {
                    level = level.max(self.objects[j].level + 1);
                }
            }
            self.objects[i].level = level;
            done.push(i);
        }
    }

    /// Drags bead `g` of chain `ci` toward `target` in short substeps.
    ///
    /// Beads within `lift_span` of the grasped bead are airborne: they pass
    /// over pegs and receive `drag_coupling^d` of each substep. The motion
    /// stops early when the chain goes taut (a link would stretch past
    /// `eps_chain`), e.g. against its anchor or around pegs.
    pub fn move_bead(&mut self, ci: usize, g: usize, target: [f64; 2], profile: &PrimitiveProfile) {
        let obstacles = self.peg_obstacles();
        let p = self.params;
        let mut c = self.chains[ci].clone();
        let start = c.beads[g];
        let total = [target[0] - start[0], target[1] - start[1]];
        let len = total[0].hypot(total[1]);
        let nsub = ((len / (c.spacing * 0.5)).ceil() as usize).max(1);
        let dv = [total[0] / nsub as f64, total[1] / nsub as f64];

        let mut pinned = vec![g];
        if let Some(a) = c.anchored {
            if a != g {
                pinned.push(a);
            }
        }
        let airborne: Vec<usize> = (0..c.len())
            .filter(|&i| c.index_distance(g, i) <= p.lift_span && Some(i) != c.anchored)
            .collect();
        let lifted = SettleOptions {
            pinned: pinned.clone(),
            airborne: airborne.clone(),
            root: Some(g),
        };

        for _ in 0..nsub {
            let prev = c.clone();
            for &i in &airborne {
                let d = c.index_distance(g, i) as i32;
                let f = if i == g { 1.0 } else { profile.drag_coupling.powi(d) };
                c.beads[i][0] += f * dv[0];
                c.beads[i][1] += f * dv[1];
            }
            let out = settle_chain_with(&c, &obstacles, p.settle_iterations, &lifted, p.eps_chain, p.eps_pen);
            if out.max_stretch > p.eps_chain {
                c = prev;
                break;
            }
            c = out.chain;
        }

        // landing: lowered beads meet the pegs, first still held, then released
        let held = SettleOptions {
            pinned: pinned.clone(),
            airborne: Vec::new(),
            root: Some(g),
        };
        c = settle_chain_with(&c, &obstacles, p.settle_iterations, &held, p.eps_chain, p.eps_pen).chain;
        let released = SettleOptions {
            pinned: c.anchored.into_iter().collect(),
            airborne: Vec::new(),
            root: Some(g),
        };
        c = settle_chain_with(&c, &obstacles, p.settle_iterations, &released, p.eps_chain, p.eps_pen).chain;
        self.chains[ci] = c;
    }

    /// Stable 64-bit digest of the state, with coordinates quantized to 1e-6.
    pub fn snapshot_hash(&self) -> u64 {
        let q = |v: f64| -> [u8; 8] { ((v * 1e6).round() as i64).to_le_bytes() };
        let mut h = Sha256::new();
        h.update(b"world");
        h.update((self.objects.len() as u64).to_le_bytes());
        for o in &self.objects {
            h.update((o.id as u64).to_le_bytes());
            h.update([o.kind.code(), o.color]);
            match o.shape {
                Shape::Circle { radius } => {
                    h.update([0u8]);
                    h.update(q(radius));
                }
                Shape::Rect { half_x, half_y } => {
                    h.update([1u8]);
                    h.update(q(half_x));
                    h.update(q(half_y));
                }
            }
            h.update(q(o.pose.x));
            h.update(q(o.pose.y));
            h.update(q(o.pose.theta));
            h.update(o.level.to_le_bytes());
            h.update((o.owner as u64).to_le_bytes());
        }
        h.update((self.chains.len() as u64).to_le_bytes());
        for c in &self.chains {
            h.update((c.beads.len() as u64).to_le_bytes());
            for b in &c.beads {
                h.update(q(b[0]));
                h.update(q(b[1]));
            }
            h.update(q(c.spacing));
            h.update(q(c.bead_radius));
            h.update([c.closed as u8]);
            h.update(c.anchored.map(|a| a as i64).unwrap_or(-1).to_le_bytes());
            h.update(&c.colors);
            h.update((c.owner as u64).to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
    }
}
