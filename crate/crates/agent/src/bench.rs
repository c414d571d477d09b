//! Experiment protocol: replicas trained per demo count, snapshots scored on
//! held-out scenes, best-snapshot tables, the product baseline for
//! multi-task problems, and the step-weighting search.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mrav_core::dataset::{collect, heldout_eval_seeds, Dataset};
use mrav_core::sampling::{
    uniform_plan, StepPlan, StepScheme, StepWeighting, TaskMode, TaskWeighting, W_MAX_RANGE,
};
use mrav_core::tasks::ProblemSpec;
use mrav_core::WorkspaceMap;
use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, AgentKind};
use crate::error::AgentError;
use crate::eval::{evaluate_snapshot, AgentPolicy};
use crate::goal::NextStepGoal;
use crate::model::AgentBundle;
use crate::train::{train_on_dataset, LossRecord, TrainPlan};

/// Product of single-task completion rates.
pub fn expected_completion(rates: &[f64]) -> f64 {
    rates.iter().product()
}

/// Product of percentages, back in percent with one decimal.
pub fn expected_completion_pct(rates_pct: &[f64]) -> String {
    let p: f64 = rates_pct.iter().map(|r| r / 100.0).product();
    format!("{:.1}", p * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Aggregation {
    /// Average replicas per snapshot, then take the best snapshot.
    #[default]
    MeanThenMax,
    /// Best snapshot per replica, then average.
    MaxThenMean,
}

/// How the per-step sampling weights are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepChoice {
    #[default]
    None,
    /// One scheme for every task.
    All(StepWeighting),
    /// Explicit scheme per task.
    PerTask(StepPlan),
}

impl StepChoice {
    pub fn plan(&self) -> Option<StepPlan> {
        match self {
            StepChoice::None => None,
            StepChoice::All(w) => Some(uniform_plan(*w)),
            StepChoice::PerTask(p) => Some(p.clone()),
        }
    }
}

/// A training and evaluation experiment, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub problem: String,
    pub agent: AgentKind,
    pub task_weighting: TaskMode,
    pub step_weighting: StepChoice,
    pub demo_count: usize,
    /// Iterations per task module; the total is this times the module count.
    pub iter_budget: usize,
    /// `[height, width]` of observations.
    pub resolution: [usize; 2],
    /// One training replica per seed.
    pub seeds: Vec<u64>,
    pub snapshots: usize,
    pub eval_episodes: usize,
    pub demo_seed_base: u64,
    pub aggregation: Aggregation,
    pub agent_config: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "placing".into(),
            agent: AgentKind::Sctn,
            task_weighting: TaskMode::Unif,
            step_weighting: StepChoice::None,
            demo_count: 10,
            iter_budget: 2000,
            resolution: [160, 80],
            seeds: vec![0],
            snapshots: 10,
            eval_episodes: 20,
            demo_seed_base: 0,
            aggregation: Aggregation::MeanThenMax,
            agent_config: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn spec(&self) -> Result<ProblemSpec, AgentError> {
        Ok(self.problem.parse()?)
    }

    pub fn map(&self) -> WorkspaceMap {
        WorkspaceMap::for_table(self.resolution[0], self.resolution[1])
    }

    pub fn iterations(&self) -> Result<usize, AgentError> {
        Ok(self.iter_budget * self.spec()?.kinds.len())
    }

    /// Agent configuration sized to the resolution, with the replica seed.
    pub fn agent_config_for(&self, seed: u64) -> AgentConfig {
        let mut c = self.agent_config.clone().with_size(self.resolution[0], self.resolution[1]);
        c.init_seed = seed;
        c
    }

    pub fn train_plan(&self, seed: u64) -> Result<TrainPlan, AgentError> {
        Ok(TrainPlan {
            iterations: self.iterations()?,
            snapshots: self.snapshots,
            seed,
            task_weighting: match self.task_weighting {
                TaskMode::Unif => TaskWeighting::unif(),
                TaskMode::Comp => TaskWeighting::comp(),
            },
            step_plan: self.step_weighting.plan(),
        })
    }

    pub fn dataset(&self) -> Result<Dataset, AgentError> {
        Ok(collect(&self.spec()?, self.demo_count, self.demo_seed_base, self.map())?)
    }

    pub fn eval_seeds(&self) -> Result<Vec<u64>, AgentError> {
        Ok(heldout_eval_seeds(&self.spec()?, self.eval_episodes))
    }

    /// Row label in the style `SCTN`, `GCTN-Comp-Step`.
    pub fn variant_name(&self) -> String {
        match (&self.step_weighting, self.task_weighting) {
            (StepChoice::None, TaskMode::Unif) => self.agent.name().to_string(),
            (StepChoice::None, TaskMode::Comp) => format!("{}-Comp", self.agent),
            (_, TaskMode::Unif) => format!("{}-Unif-Step", self.agent),
            (_, TaskMode::Comp) => format!("{}-Comp-Step", self.agent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotScore {
    pub snapshot: usize,
    pub iteration: usize,
    pub completion_rate: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub seed: u64,
    pub snapshots: Vec<SnapshotScore>,
    pub losses: Vec<LossRecord>,
}

/// Trains one replica and scores each snapshot on the held-out seeds.
/// `keep` receives every snapshot bundle (e.g. to write checkpoints).
pub fn run_replica<F>(cfg: &ExperimentConfig, ds: &Dataset, seed: u64, mut keep: F) -> Result<ReplicaResult, AgentError>
where
    F: FnMut(usize, usize, &AgentBundle) -> Result<(), AgentError>,
{
    let spec = cfg.spec()?;
    let eval_seeds = cfg.eval_seeds()?;
    let map = cfg.map();
    let bundle = AgentBundle::new(cfg.agent_config_for(seed))?;
    let mut snapshots = Vec::with_capacity(cfg.snapshots);
    let (_, losses) = train_on_dataset(bundle, cfg.agent, ds, &cfg.train_plan(seed)?, |s, it, b| {
        keep(s, it, b)?;
        let mut policy = AgentPolicy::new(b, cfg.agent, NextStepGoal::oracle());
        let summary = evaluate_snapshot(&mut policy, &spec, &eval_seeds, map)?;
        snapshots.push(SnapshotScore {
            snapshot: s,
            iteration: it,
            completion_rate: summary.completion_rate,
            mean_reward: summary.mean_reward,
        });
        Ok(())
    })?;
    Ok(ReplicaResult { seed, snapshots, losses })
}

/// Mean completion per snapshot across replicas.
pub fn snapshot_means(replicas: &[ReplicaResult]) -> Vec<f64> {
    let n = replicas.iter().map(|r| r.snapshots.len()).min().unwrap_or(0);
    (0..n)
        .map(|s| replicas.iter().map(|r| r.snapshots[s].completion_rate).sum::<f64>() / replicas.len() as f64)
        .collect()
}

pub fn best_score(replicas: &[ReplicaResult], agg: Aggregation) -> f64 {
    match agg {
        Aggregation::MeanThenMax => snapshot_means(replicas).into_iter().fold(0.0, f64::max),
        Aggregation::MaxThenMean => {
            if replicas.is_empty() {
                return 0.0;
            }
            replicas
                .iter()
                .map(|r| r.snapshots.iter().map(|s| s.completion_rate).fold(0.0, f64::max))
                .sum::<f64>()
                / replicas.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub demo_count: usize,
    pub best: f64,
    pub curve: Vec<f64>,
    pub replicas: Vec<ReplicaResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub problem: String,
    pub cells: Vec<BenchCell>,
}

/// One table row: every demo count, every replica seed.
pub fn benchmark(cfg: &ExperimentConfig, demo_counts: &[usize]) -> Result<BenchRow, AgentError> {
    let mut cells = Vec::with_capacity(demo_counts.len());
    for &n in demo_counts {
        let mut c = cfg.clone();
        c.demo_count = n;
        let ds = c.dataset()?;
        let mut replicas = Vec::with_capacity(c.seeds.len());
        for &seed in &c.seeds {
            replicas.push(run_replica(&c, &ds, seed, |_, _, _| Ok(()))?);
        }
        cells.push(BenchCell {
            demo_count: n,
            best: best_score(&replicas, c.aggregation),
            curve: snapshot_means(&replicas),
            replicas,
        });
    }
    Ok(BenchRow {
        variant: cfg.variant_name(),
        problem: cfg.problem.clone(),
        cells,
    })
}

/// Expected completion of each multi-task row, in percent per demo count,
/// from the single-task rows of the same variant. Rows whose single-task
/// parts were not benchmarked get no entry.
pub fn expected_from_rows(rows: &[BenchRow]) -> Result<BTreeMap<(String, String), Vec<f64>>, AgentError> {
    let mut out = BTreeMap::new();
    for r in rows {
        let spec: ProblemSpec = r.problem.parse()?;
        if spec.kinds.len() < 2 {
            continue;
        }
        let parts: Option<Vec<&BenchRow>> = spec
            .kinds
            .iter()
            .map(|k| rows.iter().find(|x| x.variant == r.variant && x.problem == k.name()))
            .collect();
        let Some(parts) = parts else { continue };
        let values = (0..r.cells.len())
            .map(|i| {
                let rates: Vec<f64> = parts.iter().filter_map(|p| p.cells.get(i).map(|c| c.best)).collect();
                100.0 * expected_completion(&rates)
            })
            .collect();
        out.insert((r.variant.clone(), r.problem.clone()), values);
    }
    Ok(out)
}

/// Table rows as CSV, with an expected-completion companion per demo count
/// (`expected[(variant, problem)][i]`, in percent) where one is known.
pub fn table_csv(provenance: &str, rows: &[BenchRow], expected: &BTreeMap<(String, String), Vec<f64>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {provenance}");
    let counts: Vec<usize> = rows
        .first()
        .map(|r| r.cells.iter().map(|c| c.demo_count).collect())
        .unwrap_or_default();
    let mut header = vec!["variant".to_string(), "problem".to_string()];
    for n in &counts {
        header.push(format!("demos_{n}"));
        header.push(format!("expected_{n}"));
    }
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let mut line = vec![r.variant.clone(), r.problem.clone()];
        for (i, c) in r.cells.iter().enumerate() {
            line.push(format!("{:.1}", 100.0 * c.best));
            line.push(
                expected
                    .get(&(r.variant.clone(), r.problem.clone()))
                    .and_then(|v| v.get(i))
                    .map(|e| format!("{e:.1}"))
                    .unwrap_or_default(),
            );
        }
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Learning curves: one line per (variant, demo count, snapshot).
pub fn curves_csv(provenance: &str, rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {provenance}");
    let _ = writeln!(out, "variant,problem,demos,snapshot,iteration,mean_completion");
    for r in rows {
        for c in &r.cells {
            for (s, m) in c.curve.iter().enumerate() {
                let it = c.replicas.first().and_then(|x| x.snapshots.get(s)).map(|x| x.iteration).unwrap_or(0);
                let _ = writeln!(out, "{},{},{},{},{},{:.4}", r.variant, r.problem, c.demo_count, s + 1, it, m);
            }
        }
    }
    out
}

/// Evenly spaced maximum weights across the searchable range.
pub fn w_max_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = W_MAX_RANGE;
    if points <= 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCandidate {
    pub weighting: StepWeighting,
    pub best: f64,
    pub first_best_snapshot: usize,
    pub first_best_iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: StepWeighting,
    pub best_score: f64,
    /// Iterations up to the first snapshot reaching the best score.
    pub inferred_complexity: usize,
    pub candidates: Vec<SearchCandidate>,
}

/// Grid search over every scheme and `w_max` value; each candidate trains a
/// single replica (the first configured seed). Ties keep the earlier
/// candidate.
pub fn weight_search(cfg: &ExperimentConfig, grid: &[f64]) -> Result<SearchResult, AgentError> {
    let ds = cfg.dataset()?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let mut candidates = Vec::new();
    for scheme in StepScheme::ALL {
        for &w_max in grid {
            let weighting = StepWeighting { scheme, w_max };
            let mut c = cfg.clone();
            c.step_weighting = StepChoice::All(weighting);
            let r = run_replica(&c, &ds, seed, |_, _, _| Ok(()))?;
            let best = r.snapshots.iter().map(|s| s.completion_rate).fold(0.0, f64::max);
            let first = r
                .snapshots
                .iter()
                .find(|s| s.completion_rate == best)
                .copied()
                .ok_or_else(|| AgentError::Config("no snapshots were evaluated".into()))?;
            candidates.push(SearchCandidate {
                weighting,
                best,
                first_best_snapshot: first.snapshot,
                first_best_iteration: first.iteration,
            });
        }
    }
    let winner = candidates
        .iter()
        .fold(None::<&SearchCandidate>, |acc, c| match acc {
            Some(a) if a.best >= c.best => Some(a),
            _ => Some(c),
        })
        .ok_or_else(|| AgentError::Config("empty search grid".into()))?
        .clone();
    Ok(SearchResult {
        best: winner.weighting,
        best_score: winner.best,
        inferred_complexity: winner.first_best_iteration,
        candidates,
    })
}
