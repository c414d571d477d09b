//! Direct kernels for stride-1, zero-padded convolutions with wide kernels.
//!
//! The transport correlation slides a large crop over the full image, where
//! unrolling patches costs far more memory traffic than the arithmetic
//! itself. These loops work row by row so every inner loop is a contiguous
//! multiply-add over one image row.

use crate::conv::ConvGeom;
use crate::tensor::Scalar;

/// Row range `i` with `0 <= i + d < len`, and the same for columns.
fn span(d: isize, len: usize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)).max(0) as usize;
    lo..hi.max(lo)
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y = *y + alpha * x;
    }
}

pub(crate) fn forward<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom, out: &mut [T]) {
    let (h, wd, k) = (g.h, g.w, g.k);
    let p = (k / 2) as isize;
    let plane = h * wd;
    for co in 0..g.cout {
        let o = &mut out[co * plane..(co + 1) * plane];
        for ci in 0..g.cin {
            let xp = &x[ci * plane..(ci + 1) * plane];
            let wk = &w[(co * g.cin + ci) * k * k..(co * g.cin + ci + 1) * k * k];
            for a in 0..k {
                let dy = a as isize - p;
                for i in span(dy, h) {
                    let src = (i as isize + dy) as usize;
                    let xrow = &xp[src * wd..(src + 1) * wd];
                    let orow = &mut o[i * wd..(i + 1) * wd];
                    for b in 0..k {
                        let dx = b as isize - p;
                        let js = span(dx, wd);
                        if js.is_empty() {
                            continue;
                        }
                        let xs = (js.start as isize + dx) as usize;
                        axpy(wk[a * k + b], &xrow[xs..xs + js.len()], &mut orow[js]);
                    }
                }
            }
        }
    }
}

pub(crate) fn backward<T: Scalar>(x: &[T], w: &[T], dout: &[T], g: &ConvGeom, dx: Option<&mut [T]>, dw: Option<&mut [T]>) {
    let (h, wd, k) = (g.h, g.w, g.k);
    let p = (k / 2) as isize;
    let plane = h * wd;
    if let Some(dx) = dx {
        for co in 0..g.cout {
            let d = &dout[co * plane..(co + 1) * plane];
            for ci in 0..g.cin {
                let gx = &mut dx[ci * plane..(ci + 1) * plane];
                let wk = &w[(co * g.cin + ci) * k * k..(co * g.cin + ci + 1) * k * k];
                for a in 0..k {
                    let dy = a as isize - p;
                    for i in span(dy, h) {
                        let dst = (i as isize + dy) as usize;
                        let drow = &d[i * wd..(i + 1) * wd];
                        let grow = &mut gx[dst * wd..(dst + 1) * wd];
                        for b in 0..k {
                            let dxo = b as isize - p;
                            let js = span(dxo, wd);
                            if js.is_empty() {
                                continue;
                            }
                            let xs = (js.start as isize + dxo) as usize;
                            let n = js.len();
                            axpy(wk[a * k + b], &drow[js], &mut grow[xs..xs + n]);
                        }
                    }
                }
            }
        }
    }
    if let Some(dw) = dw {
        let mut acc = vec![T::zero(); k * wd];
        for co in 0..g.cout {
            let d = &dout[co * plane..(co + 1) * plane];
            for ci in 0..g.cin {
                let xp = &x[ci * plane..(ci + 1) * plane];
                let base = (co * g.cin + ci) * k * k;
                for a in 0..k {
                    let dy = a as isize - p;
                    acc.fill(T::zero());
                    for i in span(dy, h) {
                        let src = (i as isize + dy) as usize;
                        let xrow = &xp[src * wd..(src + 1) * wd];
                        let drow = &d[i * wd..(i + 1) * wd];
                        for b in 0..k {
                            let dxo = b as isize - p;
                            let js = span(dxo, wd);
                            if js.is_empty() {
                                continue;
                            }
                            let xs = (js.start as isize + dxo) as usize;
                            let n = js.len();
                            let ab = &mut acc[b * wd..b * wd + n];
                            for ((s, &dv), &xv) in ab.iter_mut().zip(&drow[js]).zip(&xrow[xs..xs + n]) {
                                *s = *s + dv * xv;
                            }
                        }
                    }
                    for b in 0..k {
                        let s = acc[b * wd..(b + 1) * wd].iter().fold(T::zero(), |s, &v| s + v);
                        dw[base + a * k + b] = dw[base + a * k + b] + s;
                    }
                }
            }
        }
    }
}
