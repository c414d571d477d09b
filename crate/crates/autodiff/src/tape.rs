//! Recording tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. Handles are only ever created after their inputs, so the
//! node list is already a topological order and `backward` is a single
//! reverse sweep. Leaves created with `requires_grad` collect gradients in
//! place across calls until `zero_grad`; interior gradients are transient.

use crate::conv::{conv2d_backward, conv2d_forward, ConvGeom, Padding};
use crate::error::AutodiffError;
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Up to four `(flat spatial index, weight)` reads; only the first `n` are used.
pub type Tap = ([usize; 4], [f64; 4], usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Relu(Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Upsample2x(Var),
    Gather {
        x: Var,
        taps: Vec<Tap>,
    },
    Concat(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), AutodiffError> {
    if a == b {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

fn rank3(op: &'static str, t: &[usize]) -> Result<(usize, usize, usize), AutodiffError> {
    match *t {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(AutodiffError::Config {
            op,
            reason: format!("expected a [C, H, W] input, got {t:?}"),
        }),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Same-size convolution of `x: [Cin, H, W]` with `w: [Cout, Cin, k, k]`
    /// (odd `k`) and optional bias `b: [Cout]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var, AutodiffError> {
        let (cin, h, wd) = rank3("conv2d", self.value(x).shape())?;
        let ws = self.value(w).shape().to_vec();
        let [cout, wcin, k, k2] = ws[..] else {
            return Err(AutodiffError::Config {
                op: "conv2d",
                reason: format!("kernel must be [Cout, Cin, k, k], got {ws:?}"),
            });
        };
        if wcin != cin {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                left: self.value(x).shape().to_vec(),
                right: ws,
            });
        }
        if k != k2 || k % 2 == 0 {
            return Err(AutodiffError::Config {
                op: "conv2d",
                reason: format!("kernel must be square with odd size, got {k}×{k2}"),
            });
        }
        if stride == 0 {
            return Err(AutodiffError::Config {
                op: "conv2d",
                reason: "stride must be positive".into(),
            });
        }
        if let Some(b) = b {
            same_shape("conv2d", self.value(b).shape(), &[cout])?;
        }
        let geom = ConvGeom {
            cin,
            h,
            w: wd,
            cout,
            k,
            stride,
            padding,
        };
        let out = conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::from_vec(&[cout, geom.ho(), geom.wo()], out),
            Op::Conv2d { x, w, b, geom },
            rg,
        ))
    }

    /// Transport correlation: `query: [R, C, k, k]` slid over `key: [C, H, W]`
    /// with zero padding, giving `[R, H, W]`.
    pub fn correlate(&mut self, query: Var, key: Var) -> Result<Var, AutodiffError> {
        let qs = self.value(query).shape();
        if qs.len() == 4 && qs[2] % 2 == 0 {
            return Err(AutodiffError::Config {
                op: "correlate",
                reason: format!("crop size must be odd, got {}", qs[2]),
            });
        }
        self.conv2d(key, query, None, 1, Padding::Zero)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > T::zero() { a } else { T::zero() });
        let rg = self.rg(x);
        self.push(v, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape("add", self.value(a).shape(), self.value(b).shape())?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p + q)
            .collect();
        let v = Tensor::from_vec(self.value(a).shape(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape("hadamard", self.value(a).shape(), self.value(b).shape())?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p * q)
            .collect();
        let v = Tensor::from_vec(self.value(a).shape(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Hadamard(a, b), rg))
    }

    /// Nearest-neighbour 2× upsampling of `[C, H, W]`.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let (c, h, w) = rank3("upsample2x", self.value(x).shape())?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); c * 4 * h * w];
        for ci in 0..c {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    out[(ci * 2 * h + i) * 2 * w + j] = src[(ci * h + i / 2) * w + j / 2];
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_vec(&[c, 2 * h, 2 * w], out),
            Op::Upsample2x(x),
            rg,
        ))
    }

    /// Resamples every channel of `x: [C, H, W]` through `taps`, one per
    /// output cell of an `out_h × out_w` grid in row-major order.
    pub fn gather(&mut self, x: Var, out_h: usize, out_w: usize, taps: Vec<Tap>) -> Result<Var, AutodiffError> {
        let (c, h, w) = rank3("gather", self.value(x).shape())?;
        if taps.len() != out_h * out_w {
            return Err(AutodiffError::Config {
                op: "gather",
                reason: format!("{} taps for a {out_h}×{out_w} output", taps.len()),
            });
        }
        let plane = h * w;
        if let Some(bad) = taps.iter().flat_map(|t| t.0[..t.2].iter()).find(|&&i| i >= plane) {
            return Err(AutodiffError::Config {
                op: "gather",
                reason: format!("tap index {bad} outside a {h}×{w} plane"),
            });
        }
        let src = self.value(x).data();
        let mut out = vec![T::zero(); c * taps.len()];
        for ci in 0..c {
            let p = &src[ci * plane..(ci + 1) * plane];
            for (cell, t) in taps.iter().enumerate() {
                let mut acc = T::zero();
                for q in 0..t.2 {
                    acc = acc + T::of_f64(t.1[q]) * p[t.0[q]];
                }
                out[ci * taps.len() + cell] = acc;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_vec(&[c, out_h, out_w], out),
            Op::Gather { x, taps },
            rg,
        ))
    }

    /// `size × size` window of `x: [C, H, W]` centred on `(row, col)`;
    /// cells outside the source read zero.
    pub fn crop(&mut self, x: Var, center: (usize, usize), size: usize) -> Result<Var, AutodiffError> {
        let (_, h, w) = rank3("crop", self.value(x).shape())?;
        let half = (size / 2) as isize;
        let mut taps = Vec::with_capacity(size * size);
        for i in 0..size as isize {
            for j in 0..size as isize {
                let r = center.0 as isize + i - half;
                let c = center.1 as isize + j - half;
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    taps.push(([0; 4], [0.0; 4], 0));
                } else {
                    taps.push(([r as usize * w + c as usize, 0, 0, 0], [1.0, 0.0, 0.0, 0.0], 1));
                }
            }
        }
        self.gather(x, size, size, taps)
    }

    /// Concatenation along the leading axis; trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::Config {
                op: "concat",
                reason: "nothing to concatenate".into(),
            });
        };
        let tail = self.value(first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.value(p).shape();
            same_shape("concat", &s[1..], &tail)?;
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_vec(&shape, data), Op::Concat(parts.to_vec()), rg))
    }

    /// Stacks equal-shaped values along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let mut lifted = Vec::with_capacity(parts.len());
        for &p in parts {
            let mut s = vec![1];
            s.extend_from_slice(self.value(p).shape());
            lifted.push(self.reshape(p, &s)?);
        }
        self.concat(&lifted)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                left: self.value(x).shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let v = self.value(x).clone().reshape(shape);
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Softmax cross-entropy over every entry of `logits` against one flat
    /// target index. The softmax is evaluated in double precision.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, AutodiffError> {
        let z: Vec<f64> = self.value(logits).data().iter().map(|v| v.as_f64()).collect();
        if target >= z.len() {
            return Err(AutodiffError::TargetOutOfRange { target, len: z.len() });
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                op: "cross_entropy",
                index,
            });
        }
        let (loss, probs) = softmax_xent(&z, target);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(T::of_f64(loss)),
            Op::CrossEntropy { logits, target, probs },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                            *a = *a + *v;
                        }
                    }
                    None => node.grad = Some(Tensor::from_vec(node.value.shape(), g)),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let mut dx = self.slot(grads, *x).map(std::mem::take);
                let mut dw = self.slot(grads, *w).map(std::mem::take);
                let mut db = b.and_then(|b| self.slot(grads, b).map(std::mem::take));
                conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(d) = dx {
                    grads[x.0] = Some(d);
                }
                if let Some(d) = dw {
                    grads[w.0] = Some(d);
                }
                if let (Some(b), Some(d)) = (b, db) {
                    grads[b.0] = Some(d);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                if let Some(d) = self.slot(grads, *x) {
                    for ((d, &gv), &v) in d.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *d = *d + gv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, *v) {
                        for (d, &gv) in d.iter_mut().zip(g) {
                            *d = *d + gv;
                        }
                    }
                }
            }
            Op::Hadamard(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    let o = self.value(*other).data();
                    if let Some(d) = self.slot(grads, *v) {
                        for ((d, &gv), &ov) in d.iter_mut().zip(g).zip(o) {
                            *d = *d + gv * ov;
                        }
                    }
                }
            }
            Op::Upsample2x(x) => {
                let (c, h, w) = self.value(*x).chw();
                if let Some(d) = self.slot(grads, *x) {
                    for ci in 0..c {
                        for i in 0..2 * h {
                            for j in 0..2 * w {
                                let s = (ci * h + i / 2) * w + j / 2;
                                d[s] = d[s] + g[(ci * 2 * h + i) * 2 * w + j];
                            }
                        }
                    }
                }
            }
            Op::Gather { x, taps } => {
                let (c, h, w) = self.value(*x).chw();
                let plane = h * w;
                if let Some(d) = self.slot(grads, *x) {
                    for ci in 0..c {
                        for (cell, t) in taps.iter().enumerate() {
                            let gv = g[ci * taps.len() + cell];
                            for q in 0..t.2 {
                                let s = ci * plane + t.0[q];
                                d[s] = d[s] + T::of_f64(t.1[q]) * gv;
                            }
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(d) = self.slot(grads, *p) {
                        for (d, &gv) in d.iter_mut().zip(&g[off..off + n]) {
                            *d = *d + gv;
                        }
                    }
                    off += n;
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = self.slot(grads, *x) {
                    for (d, &gv) in d.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = self.slot(grads, *x) {
                    for d in d.iter_mut() {
                        *d = *d + g[0];
                    }
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                let g0 = g[0].as_f64();
                if let Some(d) = self.slot(grads, *logits) {
                    for (k, (d, &p)) in d.iter_mut().zip(probs).enumerate() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        let v = g0 * (p - onehot);
                        // vanishing terms would turn subnormal in f32 and crawl
                        // through every later multiply
                        if v.abs() >= GRAD_FLUSH {
                            *d = *d + T::of_f64(v);
                        }
                    }
                }
            }
        }
    }
}

/// Softmax gradient terms smaller than this are dropped.
pub const GRAD_FLUSH: f64 = 1e-30;

/// Numerically stable softmax cross-entropy; returns the loss and the probabilities.
pub fn softmax_xent(z: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let lse = m + s.ln();
    (lse - z[target], e.iter().map(|v| v / s).collect())
}
