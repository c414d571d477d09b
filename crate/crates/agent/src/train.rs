//! Single-sample imitation updates and the snapshot-producing training loop.

use mrav_autodiff::{Optimizer, Tape};
use mrav_core::dataset::Dataset;
use mrav_core::sampling::{augment, GoalMode, Sampler, StepPlan, TaskWeighting, TrainingSample};
use mrav_core::tasks::{compose_with, goal_image, ProblemSpec};
use mrav_core::{GridImage, WorkspaceMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::AgentKind;
use crate::error::AgentError;
use crate::model::{angle_bin, AgentBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub pick: f64,
    pub place: f64,
}

/// Flat class indices of a sample's pick pixel and `(rotation, place pixel)`.
pub fn action_targets(sample: &TrainingSample, map: &WorkspaceMap, rotations: usize) -> Result<(usize, usize), AgentError> {
    let pick = map.world_to_pixel(&sample.action.pick)?;
    let place = map.world_to_pixel(&sample.action.place)?;
    let bin = angle_bin(sample.action.delta_theta(), rotations);
    let hw = map.height * map.width;
    Ok((
        pick.row * map.width + pick.col,
        bin * hw + place.row * map.width + place.col,
    ))
}

pub struct Trainer {
    pub bundle: AgentBundle,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    pub iterations: usize,
}

impl Trainer {
    /// `seed` drives augmentation only; parameters come from the bundle.
    pub fn new(bundle: AgentBundle, seed: u64) -> Self {
        let optimizer = Optimizer::new(bundle.config.optimizer, bundle.params());
        Self {
            bundle,
            optimizer,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iterations: 0,
        }
    }

    fn forward(&self, tape: &mut Tape<f32>, sample: &TrainingSample, map: &WorkspaceMap) -> Result<(crate::model::Bound, [mrav_autodiff::Var; 2]), AgentError> {
        let b = &self.bundle;
        let (pick_t, place_t) = action_targets(sample, map, b.config.rotations)?;
        let bound = b.bind(tape, true);
        let (ov, gv, og) = b.inputs(tape, &sample.observation, &sample.goal)?;
        let pq = b.pick_logits(tape, &bound, og)?;
        let pick_loss = tape.cross_entropy(pq, pick_t)?;
        let pick_px = map.world_to_pixel(&sample.action.pick)?;
        let q = b.place_logits(tape, &bound, ov, gv, pick_px)?;
        let place_loss = tape.cross_entropy(q, place_t)?;
        Ok((bound, [pick_loss, place_loss]))
    }

    /// Losses of a sample under the current parameters, without updating.
    pub fn losses(&self, sample: &TrainingSample, map: &WorkspaceMap) -> Result<StepLosses, AgentError> {
        let mut tape = Tape::new();
        let (_, [p, q]) = self.forward(&mut tape, sample, map)?;
        Ok(StepLosses {
            pick: tape.value(p).data()[0] as f64,
            place: tape.value(q).data()[0] as f64,
        })
    }

    /// One optimizer step on both losses, after augmentation when enabled.
    pub fn train_step(&mut self, sample: &TrainingSample, map: &WorkspaceMap) -> Result<StepLosses, AgentError> {
        let sample = match &self.bundle.config.augment {
            Some(cfg) => augment(sample, map, cfg, &mut self.rng),
            None => sample.clone(),
        };
        let mut tape = Tape::new();
        let (bound, [p, q]) = self.forward(&mut tape, &sample, map)?;
        let total = tape.add(p, q)?;
        tape.backward(total)?;
        let grads: Vec<_> = bound.vars().iter().map(|&v| tape.grad(v)).collect();
        self.optimizer.step(self.bundle.params_mut(), &grads)?;
        self.iterations += 1;
        Ok(StepLosses {
            pick: tape.value(p).data()[0] as f64,
            place: tape.value(q).data()[0] as f64,
        })
    }
}

/// Idealized goal image of every episode's scene, for final-goal training.
pub fn final_goal_images(ds: &Dataset) -> Result<Vec<GridImage>, AgentError> {
    let spec: ProblemSpec = ds.manifest.problem.parse()?;
    ds.manifest
        .seeds
        .iter()
        .map(|&seed| {
            let (problem, world, _) = compose_with(&spec, seed, ds.manifest.map, ds.manifest.sim)?;
            Ok(goal_image(&problem, &world))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub iterations: usize,
    pub snapshots: usize,
    pub seed: u64,
    pub task_weighting: TaskWeighting,
    pub step_plan: Option<StepPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub pick: f64,
    pub place: f64,
}

/// Iteration at which snapshot `s` (1-based) is taken.
pub fn snapshot_iteration(iterations: usize, snapshots: usize, s: usize) -> usize {
    iterations * s / snapshots
}

/// Trains `bundle` on draws from `ds` and calls `on_snapshot(s, iteration,
/// bundle)` after each of the evenly spaced snapshots.
pub fn train_on_dataset<F>(
    bundle: AgentBundle,
    kind: AgentKind,
    ds: &Dataset,
    plan: &TrainPlan,
    mut on_snapshot: F,
) -> Result<(AgentBundle, Vec<LossRecord>), AgentError>
where
    F: FnMut(usize, usize, &AgentBundle) -> Result<(), AgentError>,
{
    if plan.snapshots == 0 || plan.iterations < plan.snapshots {
        return Err(AgentError::Config(format!(
            "{} iterations cannot hold {} snapshots",
            plan.iterations, plan.snapshots
        )));
    }
    let map = ds.manifest.map;
    if (map.height, map.width) != (bundle.config.height, bundle.config.width) {
        return Err(AgentError::Config(format!(
            "dataset images are {}×{}, the agent expects {}×{}",
            map.height, map.width, bundle.config.height, bundle.config.width
        )));
    }
    let (mode, finals) = match kind {
        AgentKind::Sctn => (GoalMode::Sequence, Vec::new()),
        AgentKind::Gctn => (GoalMode::Final, final_goal_images(ds)?),
    };
    let sampler = Sampler::new(ds, &plan.task_weighting, plan.step_plan.as_ref(), mode, finals)?;
    let mut draw_rng = ChaCha8Rng::seed_from_u64(plan.seed);
    draw_rng.set_stream(1);
    let mut trainer = Trainer::new(bundle, plan.seed);
    let mut log = Vec::with_capacity(plan.iterations);
    let mut next = 1;
    for it in 1..=plan.iterations {
        let sample = sampler.draw(&mut draw_rng);
        let l = trainer.train_step(&sample, &map)?;
        log.push(LossRecord {
            iteration: it,
            pick: l.pick,
            place: l.place,
        });
        while next <= plan.snapshots && snapshot_iteration(plan.iterations, plan.snapshots, next) == it {
            on_snapshot(next, it, &trainer.bundle)?;
            next += 1;
        }
    }
    Ok((trainer.bundle, log))
}
