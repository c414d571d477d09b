//! Scripted demonstrators for the four task modules and the sequential
//! multi-task demonstration loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Episode, EpisodeStep};
use crate::error::TaskError;
use crate::geometry::{normalize_angle, Pose2, WorkspaceMap};
use crate::sim::{render_topdown, Action, WorldState};
use crate::tasks::chaining::ChainingParams;
use crate::tasks::placing::PlacingParams;
use crate::tasks::routing::RoutingParams;
use crate::tasks::stacking::{StackingParams, SLOTS};
use crate::tasks::{
    active_profile, compose, evaluate_step, EvalState, Problem, ProblemSpec, TaskEval, TaskModule, TaskParams,
};

/// How far past a peg's outward face the chaining demonstrator aims.
pub const CHAIN_PULL_MARGIN: f64 = 0.03;
/// Extra beads of slack when choosing which routing bead to pull.
pub const ROUTE_SLACK_BEADS: usize = 2;

/// Generator for the demonstrator's own choices, independent of scene init.
pub fn demo_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

/// Next scripted action for `module` given the current world.
pub fn demo_action<R: Rng>(
    module: &TaskModule,
    world: &WorldState,
    te: &TaskEval,
    rng: &mut R,
) -> Result<Action, TaskError> {
    if te.complete() {
        return Err(TaskError::AlreadyComplete);
    }
    match &module.params {
        TaskParams::Placing(p) => placing_action(p, module, world, rng),
        TaskParams::Stacking(p) => stacking_action(p, module, world, te, rng),
        TaskParams::Chaining(p) => chaining_action(p, world, te),
        TaskParams::Routing(p) => routing_action(p, world, te, rng),
    }
}

fn placing_action<R: Rng>(
    p: &PlacingParams,
    module: &TaskModule,
    world: &WorldState,
    rng: &mut R,
) -> Result<Action, TaskError> {
    let unplaced: Vec<(usize, usize)> = p
        .disks
        .iter()
        .zip(&p.assignment)
        .filter(|(&d, &k)| {
            let o = &world.objects[d];
            let ep = &module.goal.eval_points[k];
            !(o.level == 0 && (o.pose.x - ep.pose.x).hypot(o.pose.y - ep.pose.y) <= ep.tolerance)
        })
        .map(|(&d, &k)| (d, k))
        .collect();
    let &(d, k) = unplaced.choose(rng).ok_or(TaskError::AlreadyComplete)?;
    let o = &world.objects[d];
    let target = module.goal.eval_points[k].pose;
    Ok(Action::new(
        Pose2::new(o.pose.x, o.pose.y, 0.0),
        Pose2::new(target.x, target.y, 0.0),
    ))
}

fn stacking_action<R: Rng>(
    p: &StackingParams,
    module: &TaskModule,
    world: &WorldState,
    te: &TaskEval,
    rng: &mut R,
) -> Result<Action, TaskError> {
    // lowest unfinished tier first, random order within it
    let stage = (0..6)
        .filter(|s| !te.achieved.contains(s))
        .map(|s| SLOTS[s].1)
        .min()
        .ok_or(TaskError::AlreadyComplete)?;
    let open: Vec<usize> = (0..6)
        .filter(|s| !te.achieved.contains(s) && SLOTS[*s].1 == stage)
        .collect();
    let &s = open.choose(rng).ok_or(TaskError::AlreadyComplete)?;
    let o = &world.objects[p.blocks[p.goal_block[s]]];
    let target = module.goal.eval_points[s].pose;
    Ok(Action::new(
        Pose2::new(o.pose.x, o.pose.y, 0.0),
        Pose2::new(target.x, target.y, normalize_angle(target.theta - o.pose.theta)),
    ))
}

fn chaining_action(p: &ChainingParams, world: &WorldState, te: &TaskEval) -> Result<Action, TaskError> {
    let k = (0..2).find(|k| !te.achieved.contains(k)).ok_or(TaskError::AlreadyComplete)?;
    let chain = &world.chains[p.chain];
    let pc = p.peg_centers[k];
    let out = p.outward(k);
    // the bead closest to the peg sits on the side of the loop facing it
    let bead = chain
        .beads
        .iter()
        .min_by(|a, b| {
            let da = (a[0] - pc[0]).hypot(a[1] - pc[1]);
            let db = (b[0] - pc[0]).hypot(b[1] - pc[1]);
            da.total_cmp(&db)
        })
        .copied()
        .expect("chains have beads");
    let reach = p.peg_radius + chain.bead_radius + CHAIN_PULL_MARGIN;
    let target = [pc[0] + out[0] * reach, pc[1] + out[1] * reach];
    Ok(Action::new(Pose2::at(bead), Pose2::at(target)))
}

fn routing_action<R: Rng>(
    p: &RoutingParams,
    world: &WorldState,
    te: &TaskEval,
    rng: &mut R,
) -> Result<Action, TaskError> {
    let chain = &world.chains[p.chain];
    let k = te.next_sequential;
    let n = p.peg_count();
    if k > n {
        return Err(TaskError::AlreadyComplete);
    }
    let last = chain.beads.len() - 1;
    let target = p.route[k];
    let bead = if k == n {
        last
    } else {
        let reach = p.peg_radius + chain.bead_radius;
        let mut path = vec![p.anchor];
        path.extend(p.route[..=k].iter().copied());
        let along = crate::tasks::routing::polyline_length(&path)
            + (k + 1) as f64 * std::f64::consts::PI * reach / 2.0;
        let base = (along / chain.spacing).round() as usize + ROUTE_SLACK_BEADS;
        (base + rng.gen_range(0..=2)).min(last - 1)
    };
    Ok(Action::new(Pose2::at(chain.beads[bead]), Pose2::at(target)))
}

/// Runs the demonstrator through every module in order on a fresh scene.
///
/// Fails when a module is not complete within its step budget, or when a
/// module is found complete before its turn (its segment would be empty).
pub fn run_demo(spec: &ProblemSpec, seed: u64, map: WorkspaceMap) -> Result<Episode, TaskError> {
    let (problem, world, ev) = compose(spec, seed, map)?;
    run_demo_on(&problem, world, ev, seed)
}

pub fn run_demo_on(problem: &Problem, mut world: WorldState, mut ev: EvalState, seed: u64) -> Result<Episode, TaskError> {
    let mut rng = demo_rng(seed);
    let mut steps = Vec::new();
    let mut sequence_images = Vec::new();
    let mut segments = Vec::with_capacity(problem.modules.len());
    for (m, module) in problem.modules.iter().enumerate() {
        if ev.per_task[m].complete() {
            return Err(TaskError::DemoFailed {
                task: module.kind.name().to_string(),
                max_steps: module.max_steps,
            });
        }
        let first = steps.len();
        let mut used = 0;
        while !ev.per_task[m].complete() {
            if used == module.max_steps {
                return Err(TaskError::DemoFailed {
                    task: module.kind.name().to_string(),
                    max_steps: module.max_steps,
                });
            }
            let action = demo_action(module, &world, &ev.per_task[m], &mut rng)?;
            let observation = render_topdown(&world);
            let profile = active_profile(problem, &ev, &world);
            let (next, _) = world.apply(&action, &profile);
            let (delta, next_ev) = evaluate_step(&next, problem, &ev);
            world = next;
            ev = next_ev;
            if delta > 0.0 {
                sequence_images.push(render_topdown(&world));
            }
            steps.push(EpisodeStep {
                observation,
                action,
                delta_reward: delta,
            });
            used += 1;
        }
        segments.push((first, steps.len() - 1));
    }
    Ok(Episode {
        problem: problem.name.clone(),
        seed,
        steps,
        sequence_images,
        segments,
    })
}
