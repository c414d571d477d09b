//! `mrav`: collect demonstrations, train and evaluate agents, run benchmark
//! tables, search step weightings and render episodes to PPM frames.
//!
//! Every file written carries a provenance line naming the tool version, the
//! subcommand and its effective configuration. Output paths are left out so
//! that two runs into different directories produce identical bytes.

mod ppm;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mrav_agent::bench::{
    benchmark, curves_csv, expected_from_rows, table_csv, w_max_grid, weight_search, ExperimentConfig, StepChoice,
};
use mrav_agent::eval::{evaluate_snapshot, rollout_frames, AgentPolicy, OraclePolicy, Policy, RandomPolicy};
use mrav_agent::train::{train_on_dataset, LossRecord};
use mrav_agent::{AgentBundle, AgentError, AgentKind, NextStepGoal};
use mrav_autodiff::{Checkpoint, CheckpointError};
use mrav_core::dataset::{self, heldout_eval_seeds};
use mrav_core::DatasetError;
use mrav_core::sampling::TaskMode;
use mrav_core::tasks::ProblemSpec;
use mrav_core::WorkspaceMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl From<mrav_core::TaskError> for CliError {
    fn from(e: mrav_core::TaskError) -> Self {
        CliError::Agent(e.into())
    }
}

#[derive(Parser)]
#[command(name = "mrav", version, about = "Compositional tabletop imitation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect scripted demonstrations into a dataset directory.
    Demo {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value = "160x80", value_parser = parse_resolution)]
        resolution: [usize; 2],
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one replica per configured seed and write snapshot checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Existing dataset directory; collected from the config otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a checkpoint (or a reference policy) on held-out scenes.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyKind::Agent)]
        policy: PolicyKind,
        /// Defaults to the problem the checkpoint was trained on.
        #[arg(long)]
        problem: Option<String>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = GoalChoice::Oracle)]
        goal: GoalChoice,
        /// Resolution for reference policies.
        #[arg(long, default_value = "160x80", value_parser = parse_resolution)]
        resolution: [usize; 2],
        /// Per-episode CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark rows for several problems and agent variants.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search over step-weighting schemes and maximum weights.
    SearchWeights {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write PPM frames of one episode: initial scene, every step, the goal.
    Render {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "160x80", value_parser = parse_resolution)]
        resolution: [usize; 2],
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PolicyKind {
    Agent,
    Oracle,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GoalChoice {
    /// Advance through the sequence on reward increments.
    Oracle,
    /// Pick the sequence image closest to the observation.
    Distance,
}

fn parse_resolution(s: &str) -> Result<[usize; 2], String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    if h == 0 || w == 0 {
        return Err("resolution must be nonzero".into());
    }
    Ok([h, w])
}

fn provenance(command: &str, config: &serde_json::Value) -> String {
    format!("mrav {} {command} {config}", env!("CARGO_PKG_VERSION"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn demo(problem: &str, episodes: usize, seed_base: u64, resolution: [usize; 2], out: &Path) -> Result<(), CliError> {
    let spec: ProblemSpec = problem.parse()?;
    let map = WorkspaceMap::for_table(resolution[0], resolution[1]);
    let mut ds = dataset::collect(&spec, episodes, seed_base, map)?;
    ds.manifest.provenance = Some(provenance(
        "demo",
        &json!({"problem": spec.name(), "episodes": episodes, "seed_base": seed_base, "resolution": resolution}),
    ));
    dataset::save(&ds, out)?;
    println!(
        "kept {} of {} attempted demonstrations of {}",
        ds.manifest.kept,
        ds.manifest.attempted,
        spec.name()
    );
    Ok(())
}

fn losses_csv(prov: &str, log: &[LossRecord]) -> String {
    let mut s = format!("# {prov}\niteration,pick,place\n");
    for r in log {
        let _ = writeln!(s, "{},{:.6},{:.6}", r.iteration, r.pick, r.place);
    }
    s
}

fn snapshot_file(s: usize) -> String {
    format!("snapshot_{s:02}.ckpt")
}

fn train(config: &Path, data: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let cfg: ExperimentConfig = read_json(config)?;
    let ds = match data {
        Some(dir) => dataset::load(dir)?,
        None => cfg.dataset()?,
    };
    if ds.manifest.problem != cfg.spec()?.name() {
        return Err(CliError::Usage(format!(
            "dataset holds `{}` demonstrations, the config trains `{}`",
            ds.manifest.problem, cfg.problem
        )));
    }
    let prov = provenance("train", &json!({"config": to_json(&cfg), "dataset_seeds": ds.manifest.seeds}));
    for &seed in &cfg.seeds {
        let dir = out.join(format!("seed_{seed}"));
        let bundle = AgentBundle::new(cfg.agent_config_for(seed))?;
        let plan = cfg.train_plan(seed)?;
        let mut snapshots = Vec::with_capacity(cfg.snapshots);
        let (_, log) = train_on_dataset(bundle, cfg.agent, &ds, &plan, |s, it, b| {
            let extra = json!({
                "agent": cfg.agent,
                "problem": ds.manifest.problem,
                "snapshot": s,
                "iteration": it,
                "provenance": prov,
            });
            snapshots.push((s, b.to_checkpoint(extra).encode()?));
            Ok(())
        })?;
        for (s, bytes) in &snapshots {
            write_file(&dir.join(snapshot_file(*s)), bytes)?;
        }
        write_file(&dir.join("losses.csv"), losses_csv(&prov, &log).as_bytes())?;
        let last = log.last().copied();
        println!(
            "seed {seed}: {} iterations, final pick loss {:.4}, place loss {:.4}",
            log.len(),
            last.map(|l| l.pick).unwrap_or(f64::NAN),
            last.map(|l| l.place).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn load_bundle(path: &Path) -> Result<(AgentBundle, Checkpoint), CliError> {
    let c = Checkpoint::load(path)?;
    Ok((AgentBundle::from_checkpoint(&c)?, c))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: Option<&Path>,
    policy: PolicyKind,
    problem: Option<&str>,
    episodes: usize,
    goal: GoalChoice,
    resolution: [usize; 2],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let loaded = match (policy, checkpoint) {
        (PolicyKind::Agent, None) => return Err(CliError::Usage("--policy agent needs --checkpoint".into())),
        (PolicyKind::Agent, Some(p)) => Some(load_bundle(p)?),
        _ => None,
    };
    let extra = loaded.as_ref().map(|(_, c)| c.metadata["extra"].clone()).unwrap_or_default();
    let problem = match (problem, extra["problem"].as_str()) {
        (Some(p), _) | (None, Some(p)) => p.to_string(),
        (None, None) => return Err(CliError::Usage("--problem is required".into())),
    };
    let spec: ProblemSpec = problem.parse()?;
    let seeds = heldout_eval_seeds(&spec, episodes);
    let map = match &loaded {
        Some((b, _)) => WorkspaceMap::for_table(b.config.height, b.config.width),
        None => WorkspaceMap::for_table(resolution[0], resolution[1]),
    };
    let kind: AgentKind = match extra["agent"].as_str() {
        Some(k) => k.parse().map_err(|e: AgentError| CliError::Usage(e.to_string()))?,
        None => AgentKind::Sctn,
    };
    let module = match goal {
        GoalChoice::Oracle => NextStepGoal::oracle(),
        GoalChoice::Distance => NextStepGoal::ImageDistance,
    };
    let mut policy_box: Box<dyn Policy + '_> = match (&loaded, policy) {
        (Some((b, _)), _) => Box::new(AgentPolicy::new(b, kind, module)),
        (None, PolicyKind::Random) => Box::new(RandomPolicy::new(0, 8)),
        (None, _) => Box::new(OraclePolicy::new()),
    };
    let summary = evaluate_snapshot(policy_box.as_mut(), &spec, &seeds, map)?;
    println!(
        "problem={} policy={} episodes={} completion_rate={:.4} mean_reward={:.4}",
        spec.name(),
        match policy {
            PolicyKind::Agent => kind.name(),
            PolicyKind::Oracle => "oracle",
            PolicyKind::Random => "random",
        },
        summary.episodes.len(),
        summary.completion_rate,
        summary.mean_reward
    );
    if let Some(path) = out {
        let prov = provenance(
            "eval",
            &json!({
                "checkpoint": extra,
                "policy": policy,
                "problem": spec.name(),
                "episodes": episodes,
                "goal": goal,
                "resolution": [map.height, map.width],
            }),
        );
        let mut s = format!("# {prov}\nseed,completion,reward,steps\n");
        for e in &summary.episodes {
            let _ = writeln!(s, "{},{},{:.6},{}", e.seed, e.completion, e.reward, e.steps);
        }
        write_file(path, s.as_bytes())?;
    }
    Ok(())
}

/// One benchmark row definition, layered on the shared base configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Variant {
    agent: AgentKind,
    #[serde(default = "unif")]
    task_weighting: TaskMode,
    #[serde(default)]
    step_weighting: StepChoice,
}

fn unif() -> TaskMode {
    TaskMode::Unif
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchConfig {
    #[serde(default)]
    base: ExperimentConfig,
    problems: Vec<String>,
    variants: Vec<Variant>,
    demo_counts: Vec<usize>,
}

fn bench(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: BenchConfig = read_json(config)?;
    let prov = provenance("bench", &to_json(&cfg));
    let mut rows = Vec::new();
    for v in &cfg.variants {
        for p in &cfg.problems {
            let mut c = cfg.base.clone();
            c.problem = p.clone();
            c.agent = v.agent;
            c.task_weighting = v.task_weighting;
            c.step_weighting = v.step_weighting.clone();
            let row = benchmark(&c, &cfg.demo_counts)?;
            let cells: Vec<String> = row.cells.iter().map(|x| format!("{:.1}", 100.0 * x.best)).collect();
            println!("{} {}: {}", row.variant, row.problem, cells.join(" "));
            rows.push(row);
        }
    }
    let expected = expected_from_rows(&rows)?;
    write_file(&out.join("table.csv"), table_csv(&prov, &rows, &expected).as_bytes())?;
    write_file(&out.join("curves.csv"), curves_csv(&prov, &rows).as_bytes())?;
    let results = json!({"provenance": prov, "rows": rows});
    write_file(&out.join("results.json"), format!("{results:#}\n").as_bytes())?;
    Ok(())
}

fn search_weights(config: &Path, grid: usize, out: &Path) -> Result<(), CliError> {
    let cfg: ExperimentConfig = read_json(config)?;
    let spec = cfg.spec()?;
    if spec.kinds.len() != 1 {
        return Err(CliError::Usage(format!(
            "weight search runs on single-task problems, `{}` has {} tasks",
            spec.name(),
            spec.kinds.len()
        )));
    }
    let points = w_max_grid(grid);
    let result = weight_search(&cfg, &points)?;
    println!(
        "best {:?} w_max={:.3} completion={:.3} inferred complexity {} iterations",
        result.best.scheme, result.best.w_max, result.best_score, result.inferred_complexity
    );
    let prov = provenance("search-weights", &json!({"config": to_json(&cfg), "grid": points}));
    let doc = json!({"provenance": prov, "result": result});
    write_file(out, format!("{doc:#}\n").as_bytes())
}

fn render(problem: &str, seed: u64, checkpoint: Option<&Path>, resolution: [usize; 2], out: &Path) -> Result<(), CliError> {
    let spec: ProblemSpec = problem.parse()?;
    let loaded = checkpoint.map(load_bundle).transpose()?;
    let map = match &loaded {
        Some((b, _)) => WorkspaceMap::for_table(b.config.height, b.config.width),
        None => WorkspaceMap::for_table(resolution[0], resolution[1]),
    };
    let extra = loaded.as_ref().map(|(_, c)| c.metadata["extra"].clone()).unwrap_or_default();
    let kind: AgentKind = extra["agent"].as_str().and_then(|k| k.parse().ok()).unwrap_or(AgentKind::Sctn);
    let mut policy: Box<dyn Policy + '_> = match &loaded {
        Some((b, _)) => Box::new(AgentPolicy::new(b, kind, NextStepGoal::oracle())),
        None => Box::new(OraclePolicy::new()),
    };
    let frames = rollout_frames(policy.as_mut(), &spec, seed, map)?;
    let prov = provenance(
        "render",
        &json!({"problem": spec.name(), "seed": seed, "checkpoint": extra, "resolution": [map.height, map.width]}),
    );
    for (i, f) in frames.observations.iter().enumerate() {
        write_file(&out.join(format!("frame_{i:03}.ppm")), &ppm::encode(f, &prov))?;
    }
    write_file(&out.join("goal.ppm"), &ppm::encode(&frames.goal, &prov))?;
    println!(
        "{} frames, completion {}, reward {:.3}",
        frames.observations.len(),
        frames.outcome.completion,
        frames.outcome.reward
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Demo {
            problem,
            episodes,
            seed_base,
            resolution,
            out,
        } => demo(&problem, episodes, seed_base, resolution, &out),
        Command::Train { config, data, out } => train(&config, data.as_deref(), &out),
        Command::Eval {
            checkpoint,
            policy,
            problem,
            episodes,
            goal,
            resolution,
            out,
        } => eval(
            checkpoint.as_deref(),
            policy,
            problem.as_deref(),
            episodes,
            goal,
            resolution,
            out.as_deref(),
        ),
        Command::Bench { config, out } => bench(&config, &out),
        Command::SearchWeights { config, grid, out } => search_weights(&config, grid, &out),
        Command::Render {
            problem,
            seed,
            checkpoint,
            resolution,
            out,
        } => render(&problem, seed, checkpoint.as_deref(), resolution, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
