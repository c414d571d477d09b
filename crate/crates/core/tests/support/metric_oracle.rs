//! Brute-force goal checker and random world states, shared by the metric
//! tests and the acceptance suite.
//!
//! The checker scans every object or bead of the world for each goal point
//! and computes winding numbers by signed edge crossings, so it shares no
//! code with the task modules beyond their recorded parameters.

#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use mrav_core::sim::render::BLOCK_FIRST;
use mrav_core::sim::{ObjectKind, WorldState};
use mrav_core::tasks::{EvalState, Problem, TaskModule, TaskParams};
use rand::Rng;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Winding number of the closed polygon `poly` around `p` by signed upward
/// and downward crossings of the horizontal ray to the right of `p`.
pub fn crossing_winding(poly: &[[f64; 2]], p: [f64; 2]) -> i32 {
    let n = poly.len();
    if n < 3 {
        return 0;
    }
    let mut wn = 0;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let side = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && side > 0.0 {
                wn += 1;
            }
        } else if b[1] <= p[1] && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Smallest rotation taking one square footprint onto another.
fn square_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(FRAC_PI_2);
    d.min(FRAC_PI_2 - d)
}

const ANGLE_TOLERANCE: f64 = PI / 8.0;

/// Which goal points of `m` the world satisfies.
pub fn satisfied(m: &TaskModule, world: &WorldState) -> Vec<bool> {
    let pts = &m.goal.eval_points;
    match &m.params {
        TaskParams::Placing(p) => pts
            .iter()
            .map(|ep| {
                let mut hit = false;
                for (idx, o) in world.objects.iter().enumerate() {
                    let Some(slot) = p.disks.iter().position(|&d| d == idx) else { continue };
                    if o.kind != ObjectKind::Disk || o.owner != m.owner {
                        continue;
                    }
                    if p.parity[slot] as u32 == ep.tag && o.level == 0 && dist(o.pose.xy(), ep.pose.xy()) <= ep.tolerance {
                        hit = true;
                    }
                }
                hit
            })
            .collect(),
        TaskParams::Stacking(p) => pts
            .iter()
            .enumerate()
            .map(|(s, ep)| {
                let colour = BLOCK_FIRST + p.goal_block[s] as u8;
                world.objects.iter().any(|o| {
                    o.kind == ObjectKind::Block
                        && o.owner == m.owner
                        && o.color == colour
                        && o.level == ep.tag
                        && dist(o.pose.xy(), ep.pose.xy()) <= ep.tolerance
                        && square_error(o.pose.theta, ep.pose.theta) <= ANGLE_TOLERANCE
                })
            })
            .collect(),
        TaskParams::Chaining(p) => {
            let chain = &world.chains[p.chain];
            (0..2)
                .map(|k| {
                    let c = p.peg_centers[k];
                    let r = p.peg_radius + chain.bead_radius;
                    let checks = [
                        [c[0] + p.normal[0] * r, c[1] + p.normal[1] * r],
                        [c[0] - p.normal[0] * r, c[1] - p.normal[1] * r],
                    ];
                    let near = checks
                        .iter()
                        .all(|q| chain.beads.iter().any(|b| dist(*b, *q) <= pts[k].tolerance));
                    near && crossing_winding(&chain.beads, c).abs() == 1
                })
                .collect()
        }
        TaskParams::Routing(p) => {
            let chain = &world.chains[p.chain];
            let n = p.pegs.len();
            let mut out: Vec<bool> = pts[..n]
                .iter()
                .map(|ep| chain.beads.iter().any(|b| dist(*b, ep.pose.xy()) <= ep.tolerance))
                .collect();
            let tail = *chain.beads.last().expect("chains have beads");
            out.push(dist(tail, pts[n].pose.xy()) <= pts[n].tolerance);
            out
        }
    }
}

/// Reward increment and next evaluation state, recomputed from scratch.
pub fn oracle_step(problem: &Problem, world: &WorldState, ev: &EvalState) -> (f64, EvalState) {
    let mut next = ev.clone();
    let mut delta = 0.0;
    for (m, module) in problem.modules.iter().enumerate() {
        let sat = satisfied(module, world);
        let te = &mut next.per_task[m];
        let mut gained = 0usize;
        if module.goal.sequential {
            let k = te.next_sequential;
            if k < sat.len() && sat[k] && !te.achieved.contains(&k) {
                te.achieved.insert(k);
                te.next_sequential = k + 1;
                gained = 1;
            }
        } else {
            for (k, &s) in sat.iter().enumerate() {
                if s && te.achieved.insert(k) {
                    gained += 1;
                }
            }
        }
        delta += gained as f64 / te.points as f64;
    }
    (delta, next)
}

fn jitter<R: Rng>(rng: &mut R, p: [f64; 2], r: f64) -> [f64; 2] {
    let a = rng.gen_range(0.0..TAU);
    let d = r * rng.gen::<f64>().sqrt();
    [p[0] + d * a.cos(), p[1] + d * a.sin()]
}

/// Random world and prior evaluation state for a single-module problem.
/// About half of the entities are put near their goal points so that both
/// outcomes of every check are exercised.
pub fn random_state<R: Rng>(problem: &Problem, base: &WorldState, rng: &mut R) -> (WorldState, EvalState) {
    let m = &problem.modules[0];
    let mut world = base.clone();
    let pts = &m.goal.eval_points;
    let anchor = m.anchor.xy();
    match &m.params {
        TaskParams::Placing(p) => {
            for &d in &p.disks {
                let o = &mut world.objects[d];
                let ep = &pts[rng.gen_range(0..pts.len())];
                let xy = if rng.gen_bool(0.6) {
                    jitter(rng, ep.pose.xy(), 2.0 * ep.tolerance)
                } else {
                    jitter(rng, anchor, 0.2)
                };
                o.pose.x = xy[0];
                o.pose.y = xy[1];
                o.level = if rng.gen_bool(0.2) { 1 } else { 0 };
            }
        }
        TaskParams::Stacking(p) => {
            for &b in &p.blocks {
                let s = rng.gen_range(0..pts.len());
                let ep = &pts[s];
                let o = &mut world.objects[b];
                let (xy, theta) = if rng.gen_bool(0.7) {
                    let turn = rng.gen_range(0..4) as f64 * FRAC_PI_2;
                    (
                        jitter(rng, ep.pose.xy(), 2.0 * ep.tolerance),
                        ep.pose.theta + turn + rng.gen_range(-0.6..0.6),
                    )
                } else {
                    (jitter(rng, anchor, 0.2), rng.gen_range(-PI..PI))
                };
                o.pose.x = xy[0];
                o.pose.y = xy[1];
                o.pose.theta = theta;
                o.level = if rng.gen_bool(0.6) { ep.tag } else { rng.gen_range(0..3) };
            }
        }
        TaskParams::Chaining(p) => {
            let goal = {
                let mut w = world.clone();
                m.apply_goal(&mut w);
                w.chains[p.chain].beads.clone()
            };
            let chain = &mut world.chains[p.chain];
            let n = chain.beads.len();
            match rng.gen_range(0..4) {
                0 => {
                    let s = rng.gen_range(0.0..0.015);
                    chain.beads = goal.iter().map(|b| jitter(rng, *b, s)).collect();
                }
                1 => {
                    let k = rng.gen_range(0..2);
                    let c = p.peg_centers[k];
                    let r = p.peg_radius + chain.bead_radius + rng.gen_range(-0.005..0.03);
                    let c = jitter(rng, c, 0.01);
                    chain.beads = (0..n)
                        .map(|i| {
                            let a = TAU * i as f64 / n as f64;
                            [c[0] + r * a.cos(), c[1] + r * a.sin()]
                        })
                        .collect();
                }
                2 => {
                    let s = rng.gen_range(0.0..0.01);
                    let shift = jitter(rng, [0.0, 0.0], 0.05);
                    for b in &mut chain.beads {
                        *b = jitter(rng, [b[0] + shift[0], b[1] + shift[1]], s);
                    }
                }
                _ => {
                    let c = jitter(rng, p.center, 0.1);
                    chain.beads = (0..n).map(|_| jitter(rng, c, 0.08)).collect();
                }
            }
        }
        TaskParams::Routing(p) => {
            let goal = {
                let mut w = world.clone();
                m.apply_goal(&mut w);
                w.chains[p.chain].beads.clone()
            };
            let chain = &mut world.chains[p.chain];
            match rng.gen_range(0..3) {
                0 => {
                    let s = rng.gen_range(0.0..0.03);
                    chain.beads = goal.iter().map(|b| jitter(rng, *b, s)).collect();
                }
                1 => {
                    // goal shape up to a random bead, the rest left where it was
                    let cut = rng.gen_range(0..goal.len());
                    for (b, g) in chain.beads.iter_mut().zip(&goal).take(cut) {
                        *b = jitter(rng, *g, 0.01);
                    }
                }
                _ => {
                    let s = rng.gen_range(0.0..0.02);
                    for b in &mut chain.beads {
                        *b = jitter(rng, *b, s);
                    }
                }
            }
        }
    }
    let mut ev = EvalState::new(problem);
    let te = &mut ev.per_task[0];
    if m.goal.sequential {
        let k = rng.gen_range(0..=te.points);
        te.achieved = (0..k).collect();
        te.next_sequential = k;
    } else {
        te.achieved = (0..te.points).filter(|_| rng.gen_bool(0.3)).collect();
    }
    (world, ev)
}

/// Number of random states where `evaluate_step` and the brute-force
/// checker disagree on either the increment or the next state.
pub fn count_disagreements(problem: &Problem, base: &WorldState, states: usize, rng: &mut impl Rng) -> (usize, usize) {
    let mut bad = 0;
    let mut positive = 0;
    for _ in 0..states {
        let (world, ev) = random_state(problem, base, rng);
        let (d1, e1) = mrav_core::tasks::evaluate_step(&world, problem, &ev);
        let (d2, e2) = oracle_step(problem, &world, &ev);
        if (d1 - d2).abs() > 1e-12 || e1 != e2 {
            bad += 1;
        }
        if d2 > 0.0 {
            positive += 1;
        }
    }
    (bad, positive)
}

#[test]
fn crossing_winding_examples() {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    assert_eq!(crossing_winding(&square, [0.5, 0.5]), 1);
    assert_eq!(crossing_winding(&square, [1.5, 0.5]), 0);
    let reversed: Vec<[f64; 2]> = square.iter().rev().copied().collect();
    assert_eq!(crossing_winding(&reversed, [0.5, 0.5]), -1);
}
