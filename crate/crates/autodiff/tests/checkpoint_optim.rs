use mrav_autodiff::{Checkpoint, CheckpointError, Optimizer, OptimizerConfig, Tape, Tensor};

fn sample() -> Checkpoint {
    Checkpoint {
        metadata: serde_json::json!({"seed": 7, "agent": "demo"}),
        arrays: vec![
            ("a.w".into(), Tensor::from_vec(&[2, 1, 3, 3], (0..18).map(|i| i as f32 * 0.5 - 3.0).collect())),
            ("a.b".into(), Tensor::from_vec(&[2], vec![f32::MIN_POSITIVE, -0.0])),
        ],
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let c = sample();
    let bytes = c.encode().unwrap();
    let back = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(back.encode().unwrap(), bytes);
    assert_eq!(back.get("a.w").unwrap(), c.get("a.w").unwrap());
    assert!(matches!(back.get("nope"), Err(CheckpointError::MissingArray(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.mrck");
    c.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), c);
}

#[test]
fn checkpoint_corruption_is_detected() {
    let bytes = sample().encode().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::decode(&bad), Err(CheckpointError::BadMagic)));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(Checkpoint::decode(&bad), Err(CheckpointError::BadVersion(9))));
    for cut in [3, 10, bytes.len() - 1] {
        assert!(matches!(
            Checkpoint::decode(&bytes[..cut]),
            Err(CheckpointError::Truncated { .. })
        ));
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(Checkpoint::decode(&long), Err(CheckpointError::Malformed(_))));
}

fn quadratic_grad(p: &Tensor<f64>) -> Tensor<f64> {
    let mut t = Tape::new();
    let x = t.param(p.clone());
    let sq = t.hadamard(x, x).unwrap();
    let l = t.sum(sq);
    t.backward(l).unwrap();
    t.grad(x).unwrap().clone()
}

#[test]
fn optimizers_descend_a_quadratic() {
    for cfg in [OptimizerConfig::Sgd { lr: 0.1 }, OptimizerConfig::adam(0.05)] {
        let mut params = vec![Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5])];
        let mut opt = Optimizer::new(cfg, &params);
        let start: f64 = params[0].data().iter().map(|v| v * v).sum();
        for _ in 0..100 {
            let g = quadratic_grad(&params[0]);
            opt.step(&mut params, &[Some(&g)]).unwrap();
        }
        let end: f64 = params[0].data().iter().map(|v| v * v).sum();
        assert!(end < start * 0.05, "{cfg:?}: {start} -> {end}");
        assert_eq!(opt.step_count, 100);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    for cfg in [OptimizerConfig::Sgd { lr: 0.0 }, OptimizerConfig::adam(0.0)] {
        let init = vec![Tensor::from_vec(&[2], vec![0.3f32, -0.7])];
        let mut params = init.clone();
        let mut opt = Optimizer::new(cfg, &params);
        let g = Tensor::from_vec(&[2], vec![1.0f32, 2.0]);
        opt.step(&mut params, &[Some(&g)]).unwrap();
        assert_eq!(params, init);
    }
}

#[test]
fn mismatched_gradient_is_rejected() {
    let mut params = vec![Tensor::<f64>::zeros(&[2])];
    let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), &params);
    let g = Tensor::zeros(&[3]);
    assert!(opt.step(&mut params, &[Some(&g)]).is_err());
}
