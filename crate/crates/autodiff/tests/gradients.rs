//! Central finite differences against the tape, in double precision.

use mrav_autodiff::{Padding, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor: a gradient that is exactly zero (the softmax is blind
/// to a shared bias) leaves only finite-difference noise to compare.
const NORM_FLOOR: f64 = 1e-2;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Values bounded away from zero so relu kinks are never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random(rng, shape).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

/// Builds the graph from `inputs`, reduces it with a fixed random projection
/// and returns the loss handle plus the input handles.
type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Var;

fn scalarize(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if tape.value(out).len() == 1 {
        return out;
    }
    let proj = random(&mut rng, tape.value(out).shape());
    let p = tape.constant(proj);
    let h = tape.hadamard(out, p).unwrap();
    tape.sum(h)
}

fn loss_at(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let l = scalarize(&mut tape, out, 99);
    tape.value(l).data()[0]
}

fn check(name: &str, inputs: Vec<Tensor<f64>>, build: &Build) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let l = scalarize(&mut tape, out, 99);
    tape.backward(l).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = tape
            .grad(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut numeric = Vec::with_capacity(inputs[k].len());
        for i in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= STEP;
            numeric.push((loss_at(&plus, build) - loss_at(&minus, build)) / (2.0 * STEP));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / na.max(nn).max(NORM_FLOOR);
        assert!(rel < MAX_REL_ERR, "{name}: input {k} relative error {rel:e}");
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn conv2d_zero_padding() {
    let mut r = rng(1);
    let inputs = vec![random(&mut r, &[2, 5, 4]), random(&mut r, &[3, 2, 3, 3]), random(&mut r, &[3])];
    check("conv2d zero", inputs, &|t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, Padding::Zero).unwrap());
}

#[test]
fn conv2d_circular_stride_two() {
    let mut r = rng(2);
    let inputs = vec![random(&mut r, &[2, 6, 5]), random(&mut r, &[2, 2, 3, 3]), random(&mut r, &[2])];
    check("conv2d circular s2", inputs, &|t, v| {
        t.conv2d(v[0], v[1], Some(v[2]), 2, Padding::Circular).unwrap()
    });
}

#[test]
fn correlate_both_inputs() {
    let mut r = rng(3);
    let inputs = vec![random(&mut r, &[2, 3, 3, 3]), random(&mut r, &[3, 6, 5])];
    check("correlate", inputs, &|t, v| t.correlate(v[0], v[1]).unwrap());
}

#[test]
fn relu_away_from_kink() {
    let mut r = rng(4);
    let inputs = vec![away_from_zero(&mut r, &[2, 3, 3])];
    check("relu", inputs, &|t, v| t.relu(v[0]));
}

#[test]
fn add_and_hadamard() {
    let mut r = rng(5);
    let inputs = vec![random(&mut r, &[2, 3, 4]), random(&mut r, &[2, 3, 4])];
    check("add", inputs.clone(), &|t, v| t.add(v[0], v[1]).unwrap());
    check("hadamard", inputs, &|t, v| t.hadamard(v[0], v[1]).unwrap());
}

#[test]
fn upsample() {
    let mut r = rng(6);
    check("upsample2x", vec![random(&mut r, &[2, 3, 2])], &|t, v| t.upsample2x(v[0]).unwrap());
}

#[test]
fn crop_inside_and_across_border() {
    let mut r = rng(7);
    let inputs = vec![random(&mut r, &[2, 5, 6])];
    check("crop inside", inputs.clone(), &|t, v| t.crop(v[0], (2, 3), 3).unwrap());
    check("crop border", inputs, &|t, v| t.crop(v[0], (0, 5), 5).unwrap());
}

#[test]
fn bilinear_gather() {
    let mut r = rng(8);
    let inputs = vec![random(&mut r, &[2, 4, 4])];
    let taps = vec![
        ([0, 1, 4, 5], [0.1, 0.2, 0.3, 0.4], 4),
        ([15, 0, 0, 0], [1.0, 0.0, 0.0, 0.0], 1),
        ([0; 4], [0.0; 4], 0),
        ([6, 7, 10, 11], [0.25, 0.25, 0.25, 0.25], 4),
    ];
    check("gather", inputs, &move |t, v| t.gather(v[0], 2, 2, taps.clone()).unwrap());
}

#[test]
fn concat_stack_reshape_sum() {
    let mut r = rng(9);
    let inputs = vec![random(&mut r, &[1, 3, 2]), random(&mut r, &[2, 3, 2])];
    check("concat", inputs, &|t, v| t.concat(&[v[0], v[1]]).unwrap());
    let inputs = vec![random(&mut r, &[2, 3]), random(&mut r, &[2, 3])];
    check("stack", inputs, &|t, v| t.stack(&[v[0], v[1]]).unwrap());
    check("sum", vec![random(&mut r, &[4])], &|t, v| t.sum(v[0]));
}

#[test]
fn cross_entropy_logits() {
    let mut r = rng(10);
    check("cross_entropy", vec![random(&mut r, &[2, 3, 3])], &|t, v| t.cross_entropy(v[0], 7).unwrap());
}

#[test]
fn three_layer_fcn() {
    let mut r = rng(11);
    let inputs = vec![
        random(&mut r, &[2, 6, 6]),
        random(&mut r, &[4, 2, 3, 3]),
        random(&mut r, &[4]),
        random(&mut r, &[4, 4, 3, 3]),
        random(&mut r, &[4]),
        random(&mut r, &[1, 4, 3, 3]),
        random(&mut r, &[1]),
    ];
    check("fcn", inputs, &|t, v| {
        let h = t.conv2d(v[0], v[1], Some(v[2]), 1, Padding::Circular).unwrap();
        let h = t.relu(h);
        let d = t.conv2d(h, v[3], Some(v[4]), 2, Padding::Circular).unwrap();
        let d = t.relu(d);
        let u = t.upsample2x(d).unwrap();
        let s = t.add(u, h).unwrap();
        let q = t.conv2d(s, v[5], Some(v[6]), 1, Padding::Circular).unwrap();
        t.cross_entropy(q, 13).unwrap()
    });
}
