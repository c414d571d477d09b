//! Closed-loop rollouts of a policy on held-out scenes.

use mrav_core::oracle::{demo_action, demo_rng, run_demo_on};
use mrav_core::sim::{render_topdown, Action};
use mrav_core::tasks::{
    active_profile, completion, compose, evaluate_step, goal_image, EvalState, Problem, ProblemSpec,
};
use mrav_core::sim::WorldState;
use mrav_core::{GridImage, Pose2, WorkspaceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::AgentKind;
use crate::error::AgentError;
use crate::goal::NextStepGoal;
use crate::model::AgentBundle;

/// What a policy sees before choosing an action.
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub world: &'a WorldState,
    pub ev: &'a EvalState,
    pub observation: &'a GridImage,
    pub map: &'a WorkspaceMap,
}

pub trait Policy {
    /// Called once per episode on the freshly composed scene.
    fn begin(&mut self, problem: &Problem, world: &WorldState, seed: u64) -> Result<(), AgentError>;
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, AgentError>;
    /// Reward increment earned by the last action.
    fn feedback(&mut self, _delta_reward: f64) {}
}

/// Sequence images of a scripted run on this exact scene. Falls back to the
/// idealized goal image if the script does not finish.
pub fn demonstration_sequence(problem: &Problem, world: &WorldState, seed: u64) -> Vec<GridImage> {
    match run_demo_on(problem, world.clone(), EvalState::new(problem), seed) {
        Ok(ep) if !ep.sequence_images.is_empty() => ep.sequence_images,
        _ => vec![goal_image(problem, world)],
    }
}

/// A trained bundle driven either by the final goal image or by a
/// demonstration sequence with a next-step goal module.
pub struct AgentPolicy<'a> {
    bundle: &'a AgentBundle,
    kind: AgentKind,
    module: NextStepGoal,
    goals: Vec<GridImage>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(bundle: &'a AgentBundle, kind: AgentKind, module: NextStepGoal) -> Self {
        Self {
            bundle,
            kind,
            module,
            goals: Vec::new(),
        }
    }
}

impl Policy for AgentPolicy<'_> {
    fn begin(&mut self, problem: &Problem, world: &WorldState, seed: u64) -> Result<(), AgentError> {
        self.module.reset();
        self.goals = match self.kind {
            AgentKind::Gctn => vec![goal_image(problem, world)],
            AgentKind::Sctn => demonstration_sequence(problem, world, seed),
        };
        Ok(())
    }

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, AgentError> {
        let goal = match self.kind {
            AgentKind::Gctn => self.goals.first().ok_or(AgentError::EmptySequence)?,
            AgentKind::Sctn => self.module.select(&self.goals, ctx.observation)?,
        };
        self.bundle.act(ctx.observation, goal, ctx.map)
    }

    fn feedback(&mut self, delta_reward: f64) {
        self.module.record(delta_reward, self.goals.len());
    }
}

/// The scripted demonstrator acting on the first incomplete module.
pub struct OraclePolicy {
    rng: ChaCha8Rng,
}

impl OraclePolicy {
    pub fn new() -> Self {
        Self { rng: demo_rng(0) }
    }
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for OraclePolicy {
    fn begin(&mut self, _problem: &Problem, _world: &WorldState, seed: u64) -> Result<(), AgentError> {
        self.rng = demo_rng(seed);
        Ok(())
    }

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, AgentError> {
        let m = ctx.ev.first_incomplete().unwrap_or(0);
        Ok(demo_action(&ctx.problem.modules[m], ctx.world, &ctx.ev.per_task[m], &mut self.rng)?)
    }
}

/// Uniformly random pixels and rotation bins.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    rotations: usize,
}

impl RandomPolicy {
    pub fn new(seed: u64, rotations: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            rotations: rotations.max(1),
        }
    }
}

impl Policy for RandomPolicy {
    fn begin(&mut self, _problem: &Problem, _world: &WorldState, _seed: u64) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, AgentError> {
        let m = ctx.map;
        let mut px = || {
            mrav_core::PixelCoord::new(self.rng.gen_range(0..m.height), self.rng.gen_range(0..m.width))
        };
        let (a, b) = (px(), px());
        let pick = m.pixel_to_world(a)?;
        let place = m.pixel_to_world(b)?;
        let r = self.rng.gen_range(0..self.rotations);
        let theta = crate::model::bin_angle(r, self.rotations);
        Ok(Action::new(pick, Pose2::new(place.x, place.y, theta)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub completion: u8,
    /// Total reward divided by the number of modules.
    pub reward: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub completion_rate: f64,
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeOutcome>,
}

/// Runs one episode with the problem's total step budget.
pub fn rollout<P: Policy + ?Sized>(policy: &mut P, spec: &ProblemSpec, seed: u64, map: WorkspaceMap) -> Result<EpisodeOutcome, AgentError> {
    run_episode(policy, spec, seed, map, |_| {}).map(|(o, _)| o)
}

/// Observations of a rollout (the initial scene and one per step) and the
/// idealized goal image of the scene.
#[derive(Debug, Clone)]
pub struct RolloutFrames {
    pub observations: Vec<GridImage>,
    pub goal: GridImage,
    pub outcome: EpisodeOutcome,
}

pub fn rollout_frames<P: Policy + ?Sized>(policy: &mut P, spec: &ProblemSpec, seed: u64, map: WorkspaceMap) -> Result<RolloutFrames, AgentError> {
    let mut observations = Vec::new();
    let (outcome, goal) = run_episode(policy, spec, seed, map, |img| observations.push(img.clone()))?;
    Ok(RolloutFrames {
        observations,
        goal,
        outcome,
    })
}

fn run_episode<P, F>(policy: &mut P, spec: &ProblemSpec, seed: u64, map: WorkspaceMap, mut frame: F) -> Result<(EpisodeOutcome, GridImage), AgentError>
where
    P: Policy + ?Sized,
    F: FnMut(&GridImage),
{
    let (problem, mut world, mut ev) = compose(spec, seed, map)?;
    let goal = goal_image(&problem, &world);
    policy.begin(&problem, &world, seed)?;
    let budget = problem.step_budget();
    let mut steps = 0;
    let mut observation = render_topdown(&world);
    frame(&observation);
    while steps < budget && completion(&ev) == 0 {
        let action = policy.act(&StepContext {
            problem: &problem,
            world: &world,
            ev: &ev,
            observation: &observation,
            map: &map,
        })?;
        let profile = active_profile(&problem, &ev, &world);
        let (next, _) = world.apply(&action, &profile);
        let (delta, next_ev) = evaluate_step(&next, &problem, &ev);
        world = next;
        ev = next_ev;
        policy.feedback(delta);
        steps += 1;
        observation = render_topdown(&world);
        frame(&observation);
    }
    let outcome = EpisodeOutcome {
        seed,
        completion: completion(&ev),
        reward: ev.total_reward() / problem.modules.len() as f64,
        steps,
    };
    Ok((outcome, goal))
}

/// Mean completion and reward over the given held-out seeds.
pub fn evaluate_snapshot<P: Policy + ?Sized>(
    policy: &mut P,
    spec: &ProblemSpec,
    seeds: &[u64],
    map: WorkspaceMap,
) -> Result<EvalSummary, AgentError> {
    let mut episodes = Vec::with_capacity(seeds.len());
    for &s in seeds {
        episodes.push(rollout(policy, spec, s, map)?);
    }
    let n = episodes.len().max(1) as f64;
    Ok(EvalSummary {
        completion_rate: episodes.iter().map(|e| e.completion as f64).sum::<f64>() / n,
        mean_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / n,
        episodes,
    })
}
