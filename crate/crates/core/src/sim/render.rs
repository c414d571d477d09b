//! Top-down rendering: painter's algorithm over footprints, sampled at pixel centers.

use super::{ObjectKind, RigidObject, Shape, WorldState};
use crate::geometry::{GridImage, WorkspaceMap};

pub const BACKGROUND: u8 = 0;
pub const PLATE: u8 = 1;
pub const DISK: u8 = 2;
pub const PEG: u8 = 3;
pub const BEAD: u8 = 4;
pub const BEAD_TERMINAL: u8 = 5;
pub const BASE: u8 = 6;
pub const BLOCK_FIRST: u8 = 7;
pub const CHAIN_LINK: u8 = 13;

/// RGB in [0, 1] for each palette class.
pub const PALETTE: [[f32; 3]; 14] = [
    [0.80, 0.78, 0.74], // table
    [0.30, 0.30, 0.32], // plate
    [0.85, 0.45, 0.15], // disk
    [0.55, 0.35, 0.20], // peg
    [0.20, 0.40, 0.85], // bead
    [0.95, 0.85, 0.10], // terminal bead
    [0.60, 0.60, 0.55], // stacking base
    [0.85, 0.15, 0.15], // block red
    [0.15, 0.65, 0.25], // block green
    [0.15, 0.25, 0.75], // block blue
    [0.90, 0.75, 0.10], // block yellow
    [0.55, 0.20, 0.65], // block purple
    [0.10, 0.70, 0.75], // block cyan
    [0.25, 0.35, 0.70], // chain link
];

pub fn palette(class: u8) -> [f32; 3] {
    PALETTE[(class as usize).min(PALETTE.len() - 1)]
}

enum Prim {
    Shape(Shape, crate::geometry::Pose2),
    Capsule([f64; 2], [f64; 2], f64),
}

impl Prim {
    fn covers(&self, p: [f64; 2]) -> bool {
        match self {
            Prim::Shape(s, pose) => super::shape_distance(s, pose, p) <= 0.0,
            Prim::Capsule(a, b, r) => {
                let ab = [b[0] - a[0], b[1] - a[1]];
                let ap = [p[0] - a[0], p[1] - a[1]];
                let l2 = ab[0] * ab[0] + ab[1] * ab[1];
                let t = if l2 > 0.0 {
                    ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
                d[0] * d[0] + d[1] * d[1] <= r * r
            }
        }
    }

    /// World-space axis-aligned bounds.
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Prim::Shape(s, pose) => {
                let r = match *s {
                    Shape::Circle { radius } => radius,
                    Shape::Rect { half_x, half_y } => half_x.hypot(half_y),
                };
                ([pose.x - r, pose.y - r], [pose.x + r, pose.y + r])
            }
            Prim::Capsule(a, b, r) => (
                [a[0].min(b[0]) - r, a[1].min(b[1]) - r],
                [a[0].max(b[0]) + r, a[1].max(b[1]) + r],
            ),
        }
    }
}

struct Item {
    height: f64,
    order: u32,
    color: u8,
    prim: Prim,
}

fn object_order(o: &RigidObject) -> u32 {
    match o.kind {
        ObjectKind::Plate | ObjectKind::Base => 0,
        ObjectKind::Peg => 1,
        ObjectKind::Disk => 2,
        ObjectKind::Block => 3,
    }
}

/// Renders the world at its own map resolution.
pub fn render_topdown(s: &WorldState) -> GridImage {
    render_on(s, &s.map)
}

/// Renders the world onto an arbitrary map.
pub fn render_on(s: &WorldState, map: &WorkspaceMap) -> GridImage {
    let mut items: Vec<Item> = Vec::new();
    for o in &s.objects {
        items.push(Item {
            height: s.object_top(o),
            order: object_order(o),
            color: o.color,
            prim: Prim::Shape(o.shape, o.pose),
        });
    }
    for c in &s.chains {
        for (i, j) in c.links() {
            items.push(Item {
                height: s.params.bead_height,
                order: 4,
                color: CHAIN_LINK,
                prim: Prim::Capsule(c.beads[i], c.beads[j], c.bead_radius * 0.6),
            });
        }
        for (b, &col) in c.beads.iter().zip(&c.colors) {
            items.push(Item {
                height: s.params.bead_height,
                order: 5,
                color: col,
                prim: Prim::Shape(Shape::Circle { radius: c.bead_radius }, crate::geometry::Pose2::at(*b)),
            });
        }
    }
    // stable sort keeps insertion order among equal keys
    items.sort_by(|a, b| {
        a.height
            .partial_cmp(&b.height)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.order.cmp(&b.order))
    });

    let (h, w) = (map.height, map.width);
    let mut img = GridImage::zeros(h, w, 6);
    let bg = palette(BACKGROUND);
    for r in 0..h {
        for c in 0..w {
            img.pixel_mut(r, c)[..3].copy_from_slice(&bg);
        }
    }
    for it in &items {
        let (lo, hi) = it.prim.bounds();
        let corners = [[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]];
        let mut rmin = f64::INFINITY;
        let mut rmax = f64::NEG_INFINITY;
        let mut cmin = f64::INFINITY;
        let mut cmax = f64::NEG_INFINITY;
        for q in corners.iter().map(|&p| map.world_to_index(p)) {
            rmin = rmin.min(q[0]);
            rmax = rmax.max(q[0]);
            cmin = cmin.min(q[1]);
            cmax = cmax.max(q[1]);
        }
        let r0 = rmin.floor().max(0.0) as usize;
        let c0 = cmin.floor().max(0.0) as usize;
        if rmax < 0.0 || cmax < 0.0 {
            continue;
        }
        let r1 = (rmax.ceil() as usize).min(h.saturating_sub(1));
        let c1 = (cmax.ceil() as usize).min(w.saturating_sub(1));
        let rgb = palette(it.color);
        let hv = it.height as f32;
        for r in r0..=r1 {
            for c in c0..=c1 {
                let p = map.index_to_world([r as f64, c as f64]);
                if it.prim.covers(p) {
                    let px = img.pixel_mut(r, c);
                    px[..3].copy_from_slice(&rgb);
                    px[3] = hv;
                    px[4] = hv;
                    px[5] = hv;
                }
            }
        }
    }
    img
}
