//! SE(2) poses, the pixel/world mapping of the tabletop, and raster transforms.
//!
//! Pixel `(row, col)` covers the world square
//! `[row·res, (row+1)·res) × [col·res, (col+1)·res)` measured from the map
//! origin; its world coordinate is the square's center. Rows run along the
//! 1 m table axis (world `x`), columns along the 0.5 m axis (world `y`).
//!
//! Continuous "index coordinates" put pixel centers on integers, so pixel
//! `(r, c)` sits at `(r as f64, c as f64)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::GeometryError;

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Rotates `(x, y)` counter-clockwise by `theta`.
#[inline]
pub fn rotate(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn at(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1], 0.0)
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame, returned in the world frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let [dx, dy] = rotate([other.x, other.y], self.theta);
        Pose2::new(self.x + dx, self.y + dy, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let [x, y] = rotate([-self.x, -self.y], -self.theta);
        Pose2::new(x, y, -self.theta)
    }

    /// Maps a point from this pose's local frame into the world frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let [dx, dy] = rotate(p, self.theta);
        [self.x + dx, self.y + dy]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn as_index(&self) -> [f64; 2] {
        [self.row as f64, self.col as f64]
    }
}

/// Dense multi-channel raster stored row-major as `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl GridImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, GeometryError> {
        if data.len() != height * width * channels {
            return Err(GeometryError::ShapeMismatch {
                expected: height * width * channels,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index: i });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.offset(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let o = self.offset(row, col, ch);
        self.data[o] = v;
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = self.offset(row, col, 0);
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let o = self.offset(row, col, 0);
        &mut self.data[o..o + self.channels]
    }

    pub fn contains(&self, px: PixelCoord) -> bool {
        px.row < self.height && px.col < self.width
    }

    /// Mean squared difference over all entries; `None` when shapes differ.
    pub fn mean_squared_distance(&self, other: &GridImage) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum();
        Some(s / self.data.len().max(1) as f64)
    }

    /// Center of the image in index coordinates.
    pub fn center(&self) -> [f64; 2] {
        [
            (self.height as f64 - 1.0) / 2.0,
            (self.width as f64 - 1.0) / 2.0,
        ]
    }
}

/// Placement of the pixel lattice in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    /// Pose of the outer corner of pixel (0, 0).
    pub origin: Pose2,
    /// Meters per pixel.
    pub resolution: f64,
    pub height: usize,
    pub width: usize,
}

/// Table extent along rows and columns, in meters.
pub const TABLE_LENGTH: f64 = 1.0;
pub const TABLE_WIDTH: f64 = 0.5;

impl WorkspaceMap {
    /// The 320×160 map at 3.125 mm per pixel.
    pub fn full() -> Self {
        Self::for_table(320, 160)
    }

    /// The 160×80 working map at 6.25 mm per pixel.
    pub fn working() -> Self {
        Self::for_table(160, 80)
    }

    /// A map covering the 1 m × 0.5 m table with `height` rows.
    pub fn for_table(height: usize, width: usize) -> Self {
        Self {
            origin: Pose2::identity(),
            resolution: TABLE_LENGTH / height as f64,
            height,
            width,
        }
    }

    pub fn new(origin: Pose2, resolution: f64, height: usize, width: usize) -> Result<Self, GeometryError> {
        if !(resolution > 0.0) || height == 0 || width == 0 {
            return Err(GeometryError::InvalidMap);
        }
        Ok(Self {
            origin,
            resolution,
            height,
            width,
        })
    }

    /// World extent covered by the map, `(rows·res, cols·res)`.
    pub fn bounds(&self) -> (f64, f64) {
        (
            self.height as f64 * self.resolution,
            self.width as f64 * self.resolution,
        )
    }

    /// Continuous index coordinates of a world point (pixel centers on integers).
    pub fn world_to_index(&self, p: [f64; 2]) -> [f64; 2] {
        let local = rotate(
            [p[0] - self.origin.x, p[1] - self.origin.y],
            -self.origin.theta,
        );
        [
            local[0] / self.resolution - 0.5,
            local[1] / self.resolution - 0.5,
        ]
    }

    pub fn index_to_world(&self, q: [f64; 2]) -> [f64; 2] {
        let local = [
            (q[0] + 0.5) * self.resolution,
            (q[1] + 0.5) * self.resolution,
        ];
        let r = rotate(local, self.origin.theta);
        [self.origin.x + r[0], self.origin.y + r[1]]
    }

    /// Whether a world point lies on the table covered by this map.
    pub fn contains_world(&self, p: [f64; 2]) -> bool {
        let q = self.world_to_index(p);
        let (r, c) = (q[0] + 0.5, q[1] + 0.5);
        r >= 0.0 && c >= 0.0 && r < self.height as f64 && c < self.width as f64
    }

    pub fn world_to_pixel(&self, p: &Pose2) -> Result<PixelCoord, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::OutOfBounds { x: p.x, y: p.y });
        }
        let q = self.world_to_index(p.xy());
        // Snap values within 1e-9 px of a boundary to absorb division round-off.
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < 1e-9 {
                r
            } else {
                v
            }
        };
        let r = snap(q[0] + 0.5).floor();
        let c = snap(q[1] + 0.5).floor();
        if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
            return Err(GeometryError::OutOfBounds { x: p.x, y: p.y });
        }
        Ok(PixelCoord::new(r as usize, c as usize))
    }

    pub fn pixel_to_world(&self, px: PixelCoord) -> Result<Pose2, GeometryError> {
        if px.row >= self.height || px.col >= self.width {
            return Err(GeometryError::PixelOutOfRange {
                row: px.row,
                col: px.col,
                height: self.height,
                width: self.width,
            });
        }
        let [x, y] = self.index_to_world(px.as_index());
        Ok(Pose2::new(x, y, 0.0))
    }

    /// Clamps a world point into the covered area, keeping `margin` meters from the edges.
    pub fn clamp_world(&self, p: [f64; 2], margin: f64) -> [f64; 2] {
        let local = rotate(
            [p[0] - self.origin.x, p[1] - self.origin.y],
            -self.origin.theta,
        );
        let (bx, by) = self.bounds();
        let m = margin.min(bx / 2.0).min(by / 2.0);
        let eps = 1e-9;
        let cl = [
            local[0].clamp(m, bx - m - eps),
            local[1].clamp(m, by - m - eps),
        ];
        let r = rotate(cl, self.origin.theta);
        [self.origin.x + r[0], self.origin.y + r[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Zero,
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// SE(2) transform in index coordinates: rotation about the image center,
/// then translation by `shift` rows/cols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelTransform {
    pub rotation: f64,
    pub shift: [f64; 2],
}

impl PixelTransform {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            shift: [0.0, 0.0],
        }
    }

    pub fn translation(dr: f64, dc: f64) -> Self {
        Self {
            rotation: 0.0,
            shift: [dr, dc],
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Self {
            rotation: theta,
            shift: [0.0, 0.0],
        }
    }

    /// Forward map of an index-coordinate point.
    pub fn apply(&self, q: [f64; 2], center: [f64; 2]) -> [f64; 2] {
        let r = rotate([q[0] - center[0], q[1] - center[1]], self.rotation);
        [
            r[0] + center[0] + self.shift[0],
            r[1] + center[1] + self.shift[1],
        ]
    }

    pub fn apply_inverse(&self, q: [f64; 2], center: [f64; 2]) -> [f64; 2] {
        let d = [
            q[0] - center[0] - self.shift[0],
            q[1] - center[1] - self.shift[1],
        ];
        let r = rotate(d, -self.rotation);
        [r[0] + center[0], r[1] + center[1]]
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.shift == [0.0, 0.0]
    }
}

/// Up to four `(flat pixel index, weight)` taps describing how one output
/// sample is read from a `height × width` lattice.
pub fn sample_taps(
    q: [f64; 2],
    height: usize,
    width: usize,
    padding: Padding,
    sampling: Sampling,
) -> ([usize; 4], [f64; 4], usize) {
    let mut idx = [0usize; 4];
    let mut wts = [0.0f64; 4];
    let mut n = 0;
    let resolve = |r: i64, c: i64| -> Option<usize> {
        match padding {
            Padding::Zero => {
                if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
                    None
                } else {
                    Some(r as usize * width + c as usize)
                }
            }
            Padding::Circular => {
                let rr = r.rem_euclid(height as i64) as usize;
                let cc = c.rem_euclid(width as i64) as usize;
                Some(rr * width + cc)
            }
        }
    };
    match sampling {
        Sampling::Nearest => {
            // Round half-way cases consistently so tiny float noise doesn't flip pixels.
            let r = (q[0] + 1e-9).round() as i64;
            let c = (q[1] + 1e-9).round() as i64;
            if let Some(i) = resolve(r, c) {
                idx[0] = i;
                wts[0] = 1.0;
                n = 1;
            }
        }
        Sampling::Bilinear => {
            let snap = |v: f64| {
                let r = v.round();
                if (v - r).abs() < 1e-9 {
                    r
                } else {
                    v
                }
            };
            let (qr, qc) = (snap(q[0]), snap(q[1]));
            let r0 = qr.floor();
            let c0 = qc.floor();
            let fr = qr - r0;
            let fc = qc - c0;
            let corners = [
                (r0 as i64, c0 as i64, (1.0 - fr) * (1.0 - fc)),
                (r0 as i64, c0 as i64 + 1, (1.0 - fr) * fc),
                (r0 as i64 + 1, c0 as i64, fr * (1.0 - fc)),
                (r0 as i64 + 1, c0 as i64 + 1, fr * fc),
            ];
            for (r, c, w) in corners {
                if w == 0.0 {
                    continue;
                }
                if let Some(i) = resolve(r, c) {
                    idx[n] = i;
                    wts[n] = w;
                    n += 1;
                }
            }
        }
    }
    (idx, wts, n)
}

/// Resamples `img` under `t`: `out(q) = img(t⁻¹(q))`. Output shape equals input shape.
pub fn transform_grid(
    img: &GridImage,
    t: &PixelTransform,
    padding: Padding,
    sampling: Sampling,
) -> GridImage {
    if t.is_identity() {
        return img.clone();
    }
    let (h, w, c) = img.shape();
    let center = img.center();
    let mut out = GridImage::zeros(h, w, c);
    for r in 0..h {
        for col in 0..w {
            let src = t.apply_inverse([r as f64, col as f64], center);
            let (idx, wts, n) = sample_taps(src, h, w, padding, sampling);
            let dst = out.pixel_mut(r, col);
            for k in 0..n {
                let base = idx[k] * c;
                let wk = wts[k] as f32;
                for ch in 0..c {
                    dst[ch] += wk * img.data[base + ch];
                }
            }
        }
    }
    out
}

/// A `size × size` patch centered on `center`, rotated by `−angle`:
/// output offset `o` reads the input at `center + R(angle)·o`.
/// Samples outside the image read zero.
pub fn rotate_crop(img: &GridImage, center: PixelCoord, angle: f64, size: usize) -> GridImage {
    rotate_crop_with(img, center, angle, size, Sampling::Nearest)
}

pub fn rotate_crop_with(
    img: &GridImage,
    center: PixelCoord,
    angle: f64,
    size: usize,
    sampling: Sampling,
) -> GridImage {
    let (h, w, c) = img.shape();
    let half = (size / 2) as f64;
    let mut out = GridImage::zeros(size, size, c);
    for i in 0..size {
        for j in 0..size {
            let o = rotate([i as f64 - half, j as f64 - half], angle);
            let q = [center.row as f64 + o[0], center.col as f64 + o[1]];
            let (idx, wts, n) = sample_taps(q, h, w, Padding::Zero, sampling);
            let dst = out.pixel_mut(i, j);
            for k in 0..n {
                let base = idx[k] * c;
                for ch in 0..c {
                    dst[ch] += wts[k] as f32 * img.data[base + ch];
                }
            }
        }
    }
    out
}

/// Rotation taps for a crop, reusable by differentiable consumers.
/// Returns, per output cell `(i, j)` in row-major order, up to four taps into
/// the `height × width` lattice.
pub fn rotate_crop_taps(
    height: usize,
    width: usize,
    center: PixelCoord,
    angle: f64,
    size: usize,
    sampling: Sampling,
) -> Vec<([usize; 4], [f64; 4], usize)> {
    let half = (size / 2) as f64;
    let mut taps = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let o = rotate([i as f64 - half, j as f64 - half], angle);
            let q = [center.row as f64 + o[0], center.col as f64 + o[1]];
            taps.push(sample_taps(q, height, width, Padding::Zero, sampling));
        }
    }
    taps
}
