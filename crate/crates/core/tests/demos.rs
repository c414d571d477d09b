use mrav_core::dataset::{self, collect, demo_seed, heldout_eval_seeds, Episode};
use mrav_core::oracle::run_demo;
use mrav_core::tasks::{compose, ProblemSpec, TaskKind};
use mrav_core::{DatasetError, WorkspaceMap};

fn map() -> WorkspaceMap {
    WorkspaceMap::for_table(64, 32)
}

#[test]
fn single_task_demos_finish_within_budget_with_full_reward() {
    for kind in TaskKind::ALL {
        let spec = ProblemSpec::single(kind);
        let mut kept = 0;
        for k in 0..12 {
            let seed = demo_seed(0, k);
            let Ok(ep) = run_demo(&spec, seed, map()) else { continue };
            let (problem, _, _) = compose(&spec, seed, map()).unwrap();
            assert!(ep.len() <= problem.modules[0].max_steps, "{kind:?} seed {seed}");
            assert!((ep.cumulative_reward() - 1.0).abs() < 1e-9);
            assert_eq!(ep.segments, vec![(0, ep.len() - 1)]);
            assert_eq!(ep.sequence_images.len(), ep.steps.iter().filter(|s| s.delta_reward > 0.0).count());
            kept += 1;
        }
        assert!(kept >= 10, "{kind:?}: {kept} of 12 demos succeeded");
    }
}

#[test]
fn composed_demo_segments_follow_module_order() {
    let spec: ProblemSpec = "placing+stacking+routing".parse().unwrap();
    let ep = (0..10).find_map(|k| run_demo(&spec, demo_seed(0, k), map()).ok()).unwrap();
    assert_eq!(ep.segments.len(), 3);
    assert_eq!(ep.segments[0].0, 0);
    for w in ep.segments.windows(2) {
        assert_eq!(w[1].0, w[0].1 + 1);
    }
    assert_eq!(ep.segments[2].1, ep.len() - 1);
    assert!((ep.cumulative_reward() - 3.0).abs() < 1e-9);
}

#[test]
fn demos_are_reproducible_byte_for_byte() {
    for name in ["chaining", "placing+routing"] {
        let spec: ProblemSpec = name.parse().unwrap();
        let a = run_demo(&spec, 4, map()).unwrap().encode();
        let b = run_demo(&spec, 4, map()).unwrap().encode();
        assert_eq!(a, b);
    }
}

#[test]
fn dataset_round_trips_through_a_directory() {
    let spec: ProblemSpec = "placing+chaining".parse().unwrap();
    let mut ds = collect(&spec, 3, 5, map()).unwrap();
    ds.manifest.provenance = Some("test".into());
    let dir = tempfile::tempdir().unwrap();
    dataset::save(&ds, dir.path()).unwrap();
    let back = dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert!(ds.manifest.seeds.iter().all(|s| s % 2 == 0));
    assert_eq!(ds.manifest.kept, 3);
    assert!(ds.manifest.attempted >= 3);
}

#[test]
fn damaged_episode_files_are_rejected() {
    let ds = collect(&ProblemSpec::single(TaskKind::Placing), 1, 0, map()).unwrap();
    let bytes = ds.episodes[0].encode();
    assert!(matches!(
        Episode::decode(&bytes[..bytes.len() - 3]),
        Err(DatasetError::Truncated { .. })
    ));
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(matches!(Episode::decode(&bad), Err(DatasetError::BadMagic { .. })));
    let dir = tempfile::tempdir().unwrap();
    dataset::save(&ds, dir.path()).unwrap();
    std::fs::write(dir.path().join(dataset::episode_file(0)), &bytes[..10]).unwrap();
    assert!(dataset::load(dir.path()).is_err());
}

#[test]
fn evaluation_seeds_never_meet_demo_seeds() {
    let spec = ProblemSpec::single(TaskKind::Routing);
    let eval = heldout_eval_seeds(&spec, 100);
    assert!(eval.iter().all(|s| s % 2 == 1));
    assert!((0..1000).map(|k| demo_seed(0, k)).all(|s| !eval.contains(&s)));
}
