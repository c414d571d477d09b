use mrav_autodiff::{softmax_xent, AutodiffError, Padding, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Direct six-loop convolution with same-size output.
fn reference_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, padding: Padding) -> Tensor<f64> {
    let (cin, h, wd) = x.chw();
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let (ho, wo) = (h.div_ceil(stride), wd.div_ceil(stride));
    let p = (k / 2) as isize;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = 0.0;
                for ci in 0..cin {
                    for ki in 0..k {
                        for kj in 0..k {
                            let mut ih = (oh * stride) as isize + ki as isize - p;
                            let mut iw = (ow * stride) as isize + kj as isize - p;
                            if padding == Padding::Circular {
                                ih = ih.rem_euclid(h as isize);
                                iw = iw.rem_euclid(wd as isize);
                            } else if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                continue;
                            }
                            acc += x.data()[(ci * h + ih as usize) * wd + iw as usize]
                                * w.data()[((co * cin + ci) * k + ki) * k + kj];
                        }
                    }
                }
                out[(co * ho + oh) * wo + ow] = acc;
            }
        }
    }
    Tensor::from_vec(&[cout, ho, wo], out)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn identity_kernel_passes_input_through() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut r, &[3, 4, 5]);
    let mut w = vec![0.0; 9];
    for c in 0..3 {
        w[c * 3 + c] = 1.0;
    }
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let wv = t.constant(Tensor::from_vec(&[3, 3, 1, 1], w));
    let y = t.conv2d(xv, wv, None, 1, Padding::Zero).unwrap();
    assert_eq!(t.value(y), &x);
}

#[test]
fn ones_kernel_on_one_hot_gives_plateau() {
    let mut x = vec![0.0; 25];
    x[12] = 1.0;
    let mut t = Tape::new();
    let xv = t.constant(Tensor::from_vec(&[1, 5, 5], x));
    let wv = t.constant(Tensor::filled(&[1, 1, 3, 3], 1.0));
    let y = t.conv2d(xv, wv, None, 1, Padding::Zero).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expect = if (1..=3).contains(&i) && (1..=3).contains(&j) { 1.0 } else { 0.0 };
            assert_eq!(t.value(y).data()[i * 5 + j], expect);
        }
    }
}

#[test]
fn conv_matches_six_loop_reference() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for (stride, padding) in [(1, Padding::Zero), (1, Padding::Circular), (2, Padding::Zero), (2, Padding::Circular)] {
        let x = random(&mut r, &[2, 5, 5]);
        let w = random(&mut r, &[3, 2, 3, 3]);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.constant(w.clone());
        let y = t.conv2d(xv, wv, None, stride, padding).unwrap();
        let reference = reference_conv(&x, &w, stride, padding);
        assert_eq!(t.value(y).shape(), reference.shape());
        assert!(max_abs_diff(t.value(y).data(), reference.data()) < 1e-12);
    }
}

#[test]
fn channel_mismatch_reports_both_shapes() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[2, 4, 4]));
    let w = t.constant(Tensor::zeros(&[1, 3, 3, 3]));
    match t.conv2d(x, w, None, 1, Padding::Zero) {
        Err(AutodiffError::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 4, 4]);
            assert_eq!(right, vec![1, 3, 3, 3]);
        }
        other => panic!("expected a shape error, got {other:?}"),
    }
}

#[test]
fn elementwise_identities() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut r, &[2, 3, 3]);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let ones = t.constant(Tensor::filled(&[2, 3, 3], 1.0));
    let h = t.hadamard(xv, ones).unwrap();
    assert_eq!(t.value(h), &x);
    let neg = t.constant(x.map(|v| -v.abs()));
    let z = t.relu(neg);
    assert!(t.value(z).data().iter().all(|&v| v == 0.0));
    let other = t.constant(Tensor::zeros(&[2, 3, 4]));
    assert!(t.add(xv, other).is_err());
}

#[test]
fn upsample_then_subsample_is_identity() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x = random(&mut r, &[3, 4, 5]);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let u = t.upsample2x(xv).unwrap();
        // nearest subsampling at stride 2 is a 1×1 identity kernel
        let mut w = vec![0.0; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let wv = t.constant(Tensor::from_vec(&[3, 3, 1, 1], w));
        let d = t.conv2d(u, wv, None, 2, Padding::Zero).unwrap();
        assert_eq!(t.value(d), &x);
    }
}

#[test]
fn correlate_one_hot_query_translates_channel_sum() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let key = random(&mut r, &[2, 6, 7]);
    // one-hot at offset (+1, -1) from the centre of a 3×3 patch, both channels
    let mut q = vec![0.0; 2 * 9];
    q[2 * 3] = 1.0;
    q[9 + 2 * 3] = 1.0;
    let mut t = Tape::new();
    let qv = t.constant(Tensor::from_vec(&[1, 2, 3, 3], q));
    let kv = t.constant(key.clone());
    let out = t.correlate(qv, kv).unwrap();
    for u in 0..6 {
        for v in 0..7 {
            let (su, sv) = (u as isize + 1, v as isize - 1);
            let expect = if su < 6 && sv >= 0 {
                key.data()[(su as usize) * 7 + sv as usize] + key.data()[42 + (su as usize) * 7 + sv as usize]
            } else {
                0.0
            };
            assert!((t.value(out).data()[u * 7 + v] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn correlate_finds_embedded_patch() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let k = 5;
    let patch: Vec<f64> = (0..3 * k * k).map(|_| r.gen_range(0.1..1.0)).collect();
    let (h, w) = (16, 12);
    let (cu, cv) = (9usize, 4usize);
    let mut key = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for i in 0..k {
            for j in 0..k {
                key[(c * h + cu + i - 2) * w + cv + j - 2] = patch[(c * k + i) * k + j];
            }
        }
    }
    // rotation 1 is the patch turned a half turn
    let mut turned = patch.clone();
    for c in 0..3 {
        for i in 0..k {
            for j in 0..k {
                turned[(c * k + i) * k + j] = patch[(c * k + k - 1 - i) * k + k - 1 - j];
            }
        }
    }
    let mut q = patch.clone();
    q.extend(turned);
    let mut t = Tape::new();
    let qv = t.constant(Tensor::from_vec(&[2, 3, k, k], q));
    let kv = t.constant(Tensor::from_vec(&[3, h, w], key));
    let out = t.correlate(qv, kv).unwrap();
    // brute force over every (r, u, v)
    let vals = t.value(out).data();
    let best = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    assert_eq!(best, cu * w + cv);
    assert_eq!(t.value(out).argmax(), best);
}

#[test]
fn correlate_uniform_key_is_flat_in_interior() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut t = Tape::new();
    let qv = t.constant(random(&mut r, &[1, 2, 3, 3]));
    let kv = t.constant(Tensor::filled(&[2, 8, 8], 0.5));
    let out = t.correlate(qv, kv).unwrap();
    let v = t.value(out).data();
    for u in 1..7 {
        for w in 1..7 {
            assert!((v[u * 8 + w] - v[8 + 1]).abs() < 1e-12);
        }
    }
}

#[test]
fn even_crop_size_is_a_configuration_error() {
    let mut t = Tape::<f64>::new();
    let qv = t.constant(Tensor::zeros(&[1, 1, 4, 4]));
    let kv = t.constant(Tensor::zeros(&[1, 8, 8]));
    assert!(matches!(t.correlate(qv, kv), Err(AutodiffError::Config { .. })));
}

#[test]
fn cross_entropy_examples() {
    let mut t = Tape::<f64>::new();
    let z = t.constant(Tensor::zeros(&[8, 4, 5]));
    let l = t.cross_entropy(z, 17).unwrap();
    assert!((t.value(l).data()[0] - (160f64).ln()).abs() < 1e-12);

    let mut prev = f64::INFINITY;
    for target_logit in [0.0, 5.0, 10.0, 20.0] {
        let z = t.constant(Tensor::from_vec(&[2], vec![0.0, target_logit]));
        let l = t.cross_entropy(z, 1).unwrap();
        let v = t.value(l).data()[0];
        assert!(v < prev);
        prev = v;
    }
    assert!(prev < 1e-8);

    let bad = t.constant(Tensor::from_vec(&[2], vec![0.0, f64::NAN]));
    assert!(matches!(t.cross_entropy(bad, 0), Err(AutodiffError::NonFinite { .. })));
    let z = t.constant(Tensor::zeros(&[4]));
    assert!(matches!(t.cross_entropy(z, 4), Err(AutodiffError::TargetOutOfRange { .. })));
}

#[test]
fn cross_entropy_matches_reference_softmax() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let z = random(&mut r, &[4, 4]).map(|v| v * 5.0);
    let reference = {
        let s: f64 = z.data().iter().map(|v| v.exp()).sum();
        -(z.data()[9].exp() / s).ln()
    };
    let mut t = Tape::new();
    let zv = t.constant(z.clone());
    let l = t.cross_entropy(zv, 9).unwrap();
    assert!((t.value(l).data()[0] - reference).abs() < 1e-12);
    let (l2, p) = softmax_xent(z.data(), 9);
    assert!((l2 - reference).abs() < 1e-12);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn sum_gradient_is_ones_and_accumulates() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]));
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    t.zero_grad();
    assert!(t.grad(x).is_none());
}

#[test]
fn backward_rejects_non_scalar() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::zeros(&[2, 2]));
    let y = t.relu(x);
    assert!(matches!(t.backward(y), Err(AutodiffError::NotScalar { .. })));
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::filled(&[1, 3, 3], 1.0));
    let w = t.param(Tensor::filled(&[1, 1, 3, 3], 0.5));
    let y = t.conv2d(x, w, None, 1, Padding::Circular).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert!(t.grad(x).is_none());
    assert!(t.grad(w).is_some());
}

#[test]
fn forward_is_bit_stable() {
    let run = || {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::<f32>::new();
        let x = t.constant(random(&mut r, &[4, 20, 12]).cast());
        let w = t.param(random(&mut r, &[8, 4, 3, 3]).cast());
        let y = t.conv2d(x, w, None, 2, Padding::Circular).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run(), run());
}

fn shift(x: &Tensor<f64>, dr: usize, dc: usize) -> Tensor<f64> {
    let (c, h, w) = x.chw();
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                out[(ci * h + (i + dr) % h) * w + (j + dc) % w] = x.data()[(ci * h + i) * w + j];
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Circular convolution stacks with one stride-2 stage commute with even shifts.
    #[test]
    fn conv_stack_commutes_with_even_circular_shifts(seed in any::<u64>(), dr in 0usize..4, dc in 0usize..3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut r, &[2, 8, 6]);
        let w1 = random(&mut r, &[3, 2, 3, 3]);
        let w2 = random(&mut r, &[3, 3, 3, 3]);
        let w3 = random(&mut r, &[1, 3, 3, 3]);
        let net = |input: &Tensor<f64>| {
            let mut t = Tape::new();
            let xv = t.constant(input.clone());
            let a = t.constant(w1.clone());
            let b = t.constant(w2.clone());
            let c = t.constant(w3.clone());
            let h = t.conv2d(xv, a, None, 1, Padding::Circular).unwrap();
            let h = t.relu(h);
            let d = t.conv2d(h, b, None, 2, Padding::Circular).unwrap();
            let u = t.upsample2x(d).unwrap();
            let y = t.conv2d(u, c, None, 1, Padding::Circular).unwrap();
            t.value(y).clone()
        };
        let lhs = net(&shift(&x, 2 * dr, 2 * dc));
        let rhs = shift(&net(&x), 2 * dr, 2 * dc);
        let scale = rhs.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        prop_assert!(max_abs_diff(lhs.data(), rhs.data()) / scale < 1e-6);
    }
}
