//! Task modules, problem composition, and delta-reward evaluation.
//!
//! Each module lives in one of three fixed slots along the table's long
//! axis. Inside a slot, task geometry is written in a local frame `(u, w)`
//! with `u` along world `x` and `w` along world `y`, origin at the slot
//! anchor.

pub mod chaining;
pub mod placing;
pub mod routing;
pub mod stacking;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TaskError;
use crate::geometry::{GridImage, Pose2, WorkspaceMap};
use crate::sim::{render_topdown, PrimitiveProfile, SimParams, WorldState};

pub use chaining::ChainingParams;
pub use placing::PlacingParams;
pub use routing::RoutingParams;
pub use stacking::StackingParams;

/// Tolerance used when comparing accumulated rewards against 1.
pub const EPS_REWARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Placing,
    Chaining,
    Routing,
    Stacking,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Placing,
        TaskKind::Chaining,
        TaskKind::Routing,
        TaskKind::Stacking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Placing => "placing",
            TaskKind::Chaining => "chaining",
            TaskKind::Routing => "routing",
            TaskKind::Stacking => "stacking",
        }
    }

    pub fn profile(self) -> PrimitiveProfile {
        match self {
            TaskKind::Placing | TaskKind::Stacking => PrimitiveProfile::high_fast(),
            TaskKind::Chaining | TaskKind::Routing => PrimitiveProfile::low_slow(),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "placing" => Ok(TaskKind::Placing),
            "chaining" => Ok(TaskKind::Chaining),
            "routing" => Ok(TaskKind::Routing),
            "stacking" => Ok(TaskKind::Stacking),
            other => Err(TaskError::UnknownKind(other.to_string())),
        }
    }
}

/// A problem definition: ordered module kinds. Parsed from names such as
/// `placing+routing`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kinds: Vec<TaskKind>,
}

impl ProblemSpec {
    pub fn new(kinds: Vec<TaskKind>) -> Result<Self, TaskError> {
        if kinds.is_empty() || kinds.len() > 3 {
            return Err(TaskError::ModuleCount(kinds.len()));
        }
        let mut seen = BTreeSet::new();
        for k in &kinds {
            if !seen.insert(*k) {
                return Err(TaskError::DuplicateKind(k.name().to_string()));
            }
        }
        Ok(Self { kinds })
    }

    pub fn single(kind: TaskKind) -> Self {
        Self { kinds: vec![kind] }
    }

    pub fn name(&self) -> String {
        self.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
    }

    /// The ten benchmark problems: four single tasks and six compositions.
    pub fn benchmark() -> Vec<ProblemSpec> {
        [
            "placing",
            "stacking",
            "chaining",
            "routing",
            "placing+routing",
            "stacking+routing",
            "placing+chaining",
            "placing+stacking",
            "placing+chaining+routing",
            "placing+stacking+routing",
        ]
        .iter()
        .map(|s| s.parse().expect("benchmark names parse"))
        .collect()
    }
}

impl FromStr for ProblemSpec {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kinds = s
            .split(['+', ',', '-'])
            .filter(|p| !p.trim().is_empty())
            .map(TaskKind::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| match e {
                TaskError::UnknownKind(_) => TaskError::UnknownProblem(s.to_string()),
                other => other,
            })?;
        ProblemSpec::new(kinds)
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub const SLOT_COUNT: usize = 3;
/// Half extent of a slot along the table's long axis.
pub const SLOT_HALF_LENGTH: f64 = 1.0 / 6.0;

/// Anchor pose of slot `i`: evenly spaced along the 1 m axis, centered across.
pub fn slot_anchor(i: usize) -> Pose2 {
    Pose2::new((i as f64 + 0.5) / SLOT_COUNT as f64, 0.25, 0.0)
}

/// Local slot coordinates to world coordinates.
#[inline]
pub fn local_to_world(anchor: &Pose2, uw: [f64; 2]) -> [f64; 2] {
    anchor.transform_point(uw)
}

#[inline]
pub fn world_to_local(anchor: &Pose2, p: [f64; 2]) -> [f64; 2] {
    anchor.inverse().transform_point(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub pose: Pose2,
    pub tolerance: f64,
    pub tag: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub eval_points: Vec<EvalPoint>,
    /// Points must be awarded in order, one per step.
    pub sequential: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskParams {
    Placing(PlacingParams),
    Chaining(ChainingParams),
    Routing(RoutingParams),
    Stacking(StackingParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModule {
    pub kind: TaskKind,
    pub anchor: Pose2,
    pub params: TaskParams,
    pub goal: GoalSpec,
    pub profile: PrimitiveProfile,
    pub max_steps: usize,
    /// Goal objects n.
    pub n: usize,
    /// Slot index, also the owner tag on this module's world entities.
    pub owner: usize,
}

impl TaskModule {
    pub fn point_count(&self) -> usize {
        self.goal.eval_points.len()
    }

    /// Which eval points the world currently satisfies.
    pub fn satisfied(&self, world: &WorldState) -> Vec<bool> {
        match &self.params {
            TaskParams::Placing(p) => p.satisfied(self, world),
            TaskParams::Chaining(p) => p.satisfied(self, world),
            TaskParams::Routing(p) => p.satisfied(self, world),
            TaskParams::Stacking(p) => p.satisfied(self, world),
        }
    }

    /// Moves this module's entities in `world` into the goal configuration.
    pub fn apply_goal(&self, world: &mut WorldState) {
        match &self.params {
            TaskParams::Placing(p) => p.apply_goal(world),
            TaskParams::Chaining(p) => p.apply_goal(world),
            TaskParams::Routing(p) => p.apply_goal(world),
            TaskParams::Stacking(p) => p.apply_goal(world),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub modules: Vec<TaskModule>,
}

impl Problem {
    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            kinds: self.modules.iter().map(|m| m.kind).collect(),
        }
    }

    /// Sum of per-module step budgets.
    pub fn step_budget(&self) -> usize {
        self.modules.iter().map(|m| m.max_steps).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TaskEval {
    pub achieved: BTreeSet<usize>,
    pub next_sequential: usize,
    pub points: usize,
}

impl TaskEval {
    pub fn reward(&self) -> f64 {
        if self.points == 0 {
            return 1.0;
        }
        self.achieved.len() as f64 / self.points as f64
    }

    pub fn complete(&self) -> bool {
        self.achieved.len() == self.points
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalState {
    pub per_task: Vec<TaskEval>,
}

impl EvalState {
    pub fn new(problem: &Problem) -> Self {
        Self {
            per_task: problem
                .modules
                .iter()
                .map(|m| TaskEval {
                    points: m.point_count(),
                    ..Default::default()
                })
                .collect(),
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.per_task.iter().map(|t| t.reward()).sum()
    }

    /// Index of the first module not yet complete.
    pub fn first_incomplete(&self) -> Option<usize> {
        self.per_task.iter().position(|t| !t.complete())
    }

    /// Number of positive-reward events so far, counting each awarded point.
    pub fn awarded_points(&self) -> usize {
        self.per_task.iter().map(|t| t.achieved.len()).sum()
    }
}

/// Awards newly satisfied points and returns the reward increment.
pub fn evaluate_step(world: &WorldState, problem: &Problem, ev: &EvalState) -> (f64, EvalState) {
    let mut next = ev.clone();
    let mut delta = 0.0;
    for (m, module) in problem.modules.iter().enumerate() {
        let sat = module.satisfied(world);
        let te = &mut next.per_task[m];
        let before = te.achieved.len();
        if module.goal.sequential {
            let k = te.next_sequential;
            if k < sat.len() && sat[k] {
                te.achieved.insert(k);
                te.next_sequential += 1;
            }
        } else {
            for (k, s) in sat.iter().enumerate() {
                if *s {
                    te.achieved.insert(k);
                }
            }
        }
        let gained = te.achieved.len() - before;
        delta += gained as f64 / te.points.max(1) as f64;
    }
    (delta, next)
}

/// 1 when every module's reward reached 1, else 0.
pub fn completion(ev: &EvalState) -> u8 {
    ev.per_task.iter().all(|t| (t.reward() - 1.0).abs() <= EPS_REWARD) as u8
}

/// Profile of the first incomplete module (the last module once all are done).
pub fn active_profile(problem: &Problem, ev: &EvalState, world: &WorldState) -> PrimitiveProfile {
    let m = ev
        .first_incomplete()
        .unwrap_or(problem.modules.len().saturating_sub(1));
    let p = problem.modules[m].profile;
    if world.chains.is_empty() && p.lift == crate::sim::LiftClass::HighFast {
        PrimitiveProfile::high_fast_rigid()
    } else {
        p
    }
}

/// Random generator for scene initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds the problem's modules in their slots and zeroes the evaluation.
pub fn compose(
    spec: &ProblemSpec,
    seed: u64,
    map: WorkspaceMap,
) -> Result<(Problem, WorldState, EvalState), TaskError> {
    compose_with(spec, seed, map, SimParams::default())
}

pub fn compose_with(
    spec: &ProblemSpec,
    seed: u64,
    map: WorkspaceMap,
    params: SimParams,
) -> Result<(Problem, WorldState, EvalState), TaskError> {
    let spec = ProblemSpec::new(spec.kinds.clone())?;
    let mut rng = init_rng(seed);
    let mut world = WorldState::empty(map);
    world.params = params;
    world.seed = seed;
    let mut modules = Vec::with_capacity(spec.kinds.len());
    for (slot, kind) in spec.kinds.iter().enumerate() {
        let anchor = slot_anchor(slot);
        let module = match kind {
            TaskKind::Placing => placing::init(&mut world, anchor, slot, &mut rng),
            TaskKind::Chaining => chaining::init(&mut world, anchor, slot, &mut rng),
            TaskKind::Routing => routing::init(&mut world, anchor, slot, &mut rng),
            TaskKind::Stacking => stacking::init(&mut world, anchor, slot, &mut rng),
        };
        modules.push(module);
    }
    check_footprints(&world, &modules)?;
    let problem = Problem {
        name: spec.name(),
        modules,
    };
    let ev = EvalState::new(&problem);
    Ok((problem, world, ev))
}

/// Every entity must stay inside its owner's slot strip.
fn check_footprints(world: &WorldState, modules: &[TaskModule]) -> Result<(), TaskError> {
    let inside = |owner: usize, p: [f64; 2], r: f64| {
        let local = world_to_local(&slot_anchor(owner), p);
        local[0].abs() + r <= SLOT_HALF_LENGTH + 1e-9 && local[1].abs() + r <= 0.25 + 1e-9
    };
    let label = |owner: usize| {
        modules
            .iter()
            .find(|m| m.owner == owner)
            .map(|m| m.kind.name().to_string())
            .unwrap_or_else(|| format!("slot {owner}"))
    };
    for o in &world.objects {
        if !inside(o.owner, o.pose.xy(), o.bounding_radius()) {
            let other = (o.owner + 1) % SLOT_COUNT;
            return Err(TaskError::Overlap(label(o.owner), label(other)));
        }
    }
    for c in &world.chains {
        for b in &c.beads {
            if !inside(c.owner, *b, c.bead_radius) {
                let other = (c.owner + 1) % SLOT_COUNT;
                return Err(TaskError::Overlap(label(c.owner), label(other)));
            }
        }
    }
    Ok(())
}

/// The world with every module moved into its goal configuration.
pub fn goal_world(problem: &Problem, world: &WorldState) -> WorldState {
    let mut g = world.clone();
    for m in &problem.modules {
        m.apply_goal(&mut g);
    }
    g.settle_levels(None);
    g
}

pub fn goal_image(problem: &Problem, world: &WorldState) -> GridImage {
    render_topdown(&goal_world(problem, world))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_names_round_trip() {
        for p in ProblemSpec::benchmark() {
            assert_eq!(p.name().parse::<ProblemSpec>().unwrap(), p);
        }
        assert_eq!(ProblemSpec::benchmark().len(), 10);
        assert!("placing+placing".parse::<ProblemSpec>().is_err());
        assert!("juggling".parse::<ProblemSpec>().is_err());
    }

    #[test]
    fn fresh_eval_is_incomplete() {
        let (p, _, ev) = compose(&"placing".parse().unwrap(), 3, WorkspaceMap::working()).unwrap();
        assert_eq!(completion(&ev), 0);
        assert_eq!(ev.total_reward(), 0.0);
        assert_eq!(p.step_budget(), 11);
    }
}
