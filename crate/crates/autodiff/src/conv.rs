//! Convolution kernels on raw slices: chunked im2col followed by a single
//! matrix multiply per chunk, and the matching col2im scatter for input
//! gradients.
//!
//! Outputs use "same" geometry: output cell `(oh, ow)` is centred on input
//! cell `(oh·stride, ow·stride)`, so the output is `ceil(H/stride) × ceil(W/stride)`.

use serde::{Deserialize, Serialize};

use crate::tensor::Scalar;

/// Border handling for the convolution window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Padding {
    Zero,
    #[default]
    Circular,
}

/// Smallest kernel routed to the direct row kernels (stride 1, zero padding).
const DIRECT_MIN_K: usize = 5;

/// Upper bound on im2col buffer elements per chunk.
const CHUNK_ELEMS: usize = 1 << 21;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvGeom {
    pub fn ho(&self) -> usize {
        self.h.div_ceil(self.stride)
    }
    pub fn wo(&self) -> usize {
        self.w.div_ceil(self.stride)
    }
    /// Rows of the unrolled patch matrix.
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn direct(&self) -> bool {
        self.stride == 1 && self.padding == Padding::Zero && self.k >= DIRECT_MIN_K
    }

    fn rows_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.patch_len() * self.wo()).max(1)).clamp(1, self.ho().max(1))
    }

    /// Input index along one axis for output position `o` and tap `t`.
    fn source(&self, o: usize, t: usize, len: usize) -> usize {
        let p = (self.k / 2) as isize;
        let i = (o * self.stride) as isize + t as isize - p;
        match self.padding {
            Padding::Zero => {
                if i < 0 || i >= len as isize {
                    NONE
                } else {
                    i as usize
                }
            }
            Padding::Circular => i.rem_euclid(len as isize) as usize,
        }
    }

    /// `map[t * wo + ow]` = input column for tap `t`.
    fn col_map(&self) -> Vec<usize> {
        let wo = self.wo();
        let mut m = Vec::with_capacity(self.k * wo);
        for t in 0..self.k {
            for ow in 0..wo {
                m.push(self.source(ow, t, self.w));
            }
        }
        m
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cmap: &[usize], row0: usize, rows: usize, cols: &mut [T]) {
    let (k, wo) = (g.k, g.wo());
    let n = rows * wo;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let dst = &mut cols[r * n..(r + 1) * n];
                let cm = &cmap[kj * wo..(kj + 1) * wo];
                for dr in 0..rows {
                    let ih = g.source(row0 + dr, ki, g.h);
                    let out = &mut dst[dr * wo..(dr + 1) * wo];
                    if ih == NONE {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih * g.w..(ih + 1) * g.w];
                    for (o, &iw) in out.iter_mut().zip(cm) {
                        *o = if iw == NONE { T::zero() } else { src[iw] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, cmap: &[usize], row0: usize, rows: usize, dx: &mut [T]) {
    let (k, wo) = (g.k, g.wo());
    let n = rows * wo;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let src = &cols[r * n..(r + 1) * n];
                let cm = &cmap[kj * wo..(kj + 1) * wo];
                for dr in 0..rows {
                    let ih = g.source(row0 + dr, ki, g.h);
                    if ih == NONE {
                        continue;
                    }
                    let dst = &mut plane[ih * g.w..(ih + 1) * g.w];
                    for (&v, &iw) in src[dr * wo..(dr + 1) * wo].iter().zip(cm) {
                        if iw != NONE {
                            dst[iw] = dst[iw] + v;
                        }
                    }
                }
            }
        }
    }
}

/// `x`: `[cin, h, w]`, `w`: `[cout, cin, k, k]`, `b`: `[cout]`. Returns `[cout, ho, wo]`.
pub fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let (ho, wo, kk) = (g.ho(), g.wo(), g.patch_len());
    let plane = ho * wo;
    let mut out = vec![T::zero(); g.cout * plane];
    if g.direct() {
        crate::xcorr::forward(x, w, g, &mut out);
        add_bias(&mut out, b, plane);
        return out;
    }
    let cmap = g.col_map();
    let step = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kk * step * wo];
    let mut row0 = 0;
    while row0 < ho {
        let rows = step.min(ho - row0);
        let n = rows * wo;
        im2col(x, g, &cmap, row0, rows, &mut cols[..kk * n]);
        // SAFETY: all three operands are live slices sized for these strides.
        unsafe {
            T::gemm(
                g.cout,
                kk,
                n,
                T::one(),
                w.as_ptr(),
                kk as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                T::zero(),
                out.as_mut_ptr().add(row0 * wo),
                plane as isize,
                1,
            );
        }
        row0 += rows;
    }
    add_bias(&mut out, b, plane);
    out
}

fn add_bias<T: Scalar>(out: &mut [T], b: Option<&[T]>, plane: usize) {
    if let Some(b) = b {
        for (co, &bv) in b.iter().enumerate() {
            for v in &mut out[co * plane..(co + 1) * plane] {
                *v = *v + bv;
            }
        }
    }
}

/// Accumulates gradients of a convolution given the output gradient `dout`.
/// Any of `dx`, `dw`, `db` may be skipped.
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    g: &ConvGeom,
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let (ho, wo, kk) = (g.ho(), g.wo(), g.patch_len());
    let plane = ho * wo;
    if let Some(db) = db {
        for (co, d) in db.iter_mut().enumerate() {
            *d = dout[co * plane..(co + 1) * plane].iter().fold(*d, |a, &v| a + v);
        }
    }
    if dx.is_none() && dw.is_none() {
        return;
    }
    if g.direct() {
        crate::xcorr::backward(x, w, dout, g, dx, dw);
        return;
    }
    let cmap = g.col_map();
    let step = g.rows_per_chunk();
    let mut cols = vec![T::zero(); kk * step * wo];
    let mut dx = dx;
    let mut dw = dw;
    let mut row0 = 0;
    while row0 < ho {
        let rows = step.min(ho - row0);
        let n = rows * wo;
        if let Some(dw) = dw.as_deref_mut() {
            im2col(x, g, &cmap, row0, rows, &mut cols[..kk * n]);
            // SAFETY: dw is cout×kk, dout chunk is cout×n, cols is kk×n read transposed.
            unsafe {
                T::gemm(
                    g.cout,
                    n,
                    kk,
                    T::one(),
                    dout.as_ptr().add(row0 * wo),
                    plane as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    n as isize,
                    T::one(),
                    dw.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            // SAFETY: w read transposed as kk×cout, dout chunk cout×n, cols kk×n.
            unsafe {
                T::gemm(
                    kk,
                    g.cout,
                    n,
                    T::one(),
                    w.as_ptr(),
                    1,
                    kk as isize,
                    dout.as_ptr().add(row0 * wo),
                    plane as isize,
                    1,
                    T::zero(),
                    cols.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            col2im(&cols[..kk * n], g, &cmap, row0, rows, dx);
        }
        row0 += rows;
    }
}
