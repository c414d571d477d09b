//! Bead chains and their quasi-static relaxation.
//!
//! A chain is a polyline of beads joined by rigid links of length `spacing`.
//! Relaxation is Gauss-Seidel projection of the link constraints followed by
//! push-out from circular obstacles, the usual position-based scheme with all
//! free beads at unit inverse mass and pinned beads at zero.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeadChain {
    pub beads: Vec<[f64; 2]>,
    pub spacing: f64,
    pub bead_radius: f64,
    pub closed: bool,
    /// Bead fixed to the table, if any.
    pub anchored: Option<usize>,
    /// Palette class per bead.
    pub colors: Vec<u8>,
    /// Index of the task module that owns this chain.
    pub owner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Result of a relaxation run. An unsatisfied result is not an error: the
/// chain is still the best configuration the solver reached.
#[derive(Debug, Clone, PartialEq)]
pub struct SettleOutcome {
    pub chain: BeadChain,
    pub satisfied: bool,
    /// Largest `| |b_i − b_j| − spacing | / spacing` over links.
    pub max_stretch: f64,
    /// Deepest bead penetration into an obstacle, meters.
    pub max_penetration: f64,
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl BeadChain {
    pub fn len(&self) -> usize {
        self.beads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beads.is_empty()
    }

    /// Pairs of bead indices joined by a link.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let n = self.beads.len();
        let mut out: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if self.closed && n > 2 {
            out.push((n - 1, 0));
        }
        out
    }

    /// Number of links times spacing.
    pub fn rest_length(&self) -> f64 {
        self.links().len() as f64 * self.spacing
    }

    /// Sum of current link lengths.
    pub fn arc_length(&self) -> f64 {
        self.links()
            .iter()
            .map(|&(i, j)| dist(self.beads[i], self.beads[j]))
            .sum()
    }

    pub fn max_stretch(&self) -> f64 {
        self.links()
            .iter()
            .map(|&(i, j)| (dist(self.beads[i], self.beads[j]) - self.spacing).abs() / self.spacing)
            .fold(0.0, f64::max)
    }

    pub fn max_penetration(&self, obstacles: &[Circle]) -> f64 {
        let mut worst = 0.0f64;
        for b in &self.beads {
            for o in obstacles {
                let pen = o.radius + self.bead_radius - dist(*b, o.center);
                worst = worst.max(pen);
            }
        }
        worst
    }

    /// Index distance between two beads along the chain.
    pub fn index_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        if self.closed {
            d.min(self.beads.len() - d)
        } else {
            d
        }
    }

    /// Link order for Gauss-Seidel sweeps: links nearest `root` first, so a
    /// displacement at the root propagates outward within a single sweep.
    fn sweep_order(&self, root: usize) -> Vec<(usize, usize)> {
        let n = self.beads.len();
        let mut links = self.links();
        links.sort_by_key(|&(i, j)| {
            let near = if self.index_distance(root, i) <= self.index_distance(root, j) {
                i
            } else {
                j
            };
            (self.index_distance(root, near), i.min(j))
        });
        // orient each link root-side first
        links
            .into_iter()
            .map(|(i, j)| {
                if self.index_distance(root, i) <= self.index_distance(root, j) || n == 0 {
                    (i, j)
                } else {
                    (j, i)
                }
            })
            .collect()
    }
}

/// Relaxation configuration: which beads are pinned and which ignore obstacles.
#[derive(Debug, Clone, Default)]
pub struct SettleOptions {
    pub pinned: Vec<usize>,
    /// Beads exempt from obstacle push-out (lifted off the table).
    pub airborne: Vec<usize>,
    /// Root of the sweep order; defaults to the first pinned bead, else bead 0.
    pub root: Option<usize>,
}

pub const DEFAULT_EPS_CHAIN: f64 = 0.02;
pub const DEFAULT_EPS_PEN: f64 = 1e-4;
/// Sweeps stop early once every link is within this fraction of `eps_chain`.
pub const CONVERGED_FRACTION: f64 = 0.05;

/// Runs `iterations` projection sweeps with the chain's own anchor pinned.
pub fn settle_chain(chain: &BeadChain, obstacles: &[Circle], iterations: usize) -> SettleOutcome {
    let mut opts = SettleOptions::default();
    if let Some(a) = chain.anchored {
        opts.pinned.push(a);
    }
    settle_chain_with(chain, obstacles, iterations, &opts, DEFAULT_EPS_CHAIN, DEFAULT_EPS_PEN)
}

pub fn settle_chain_with(
    chain: &BeadChain,
    obstacles: &[Circle],
    iterations: usize,
    opts: &SettleOptions,
    eps_chain: f64,
    eps_pen: f64,
) -> SettleOutcome {
    let mut c = chain.clone();
    let n = c.beads.len();
    let mut inv_mass = vec![1.0f64; n];
    for &p in &opts.pinned {
        if p < n {
            inv_mass[p] = 0.0;
        }
    }
    let mut collides = vec![true; n];
    for &a in &opts.airborne {
        if a < n {
            collides[a] = false;
        }
    }
    let root = opts.root.or_else(|| opts.pinned.first().copied()).unwrap_or(0);
    let order = if n > 0 { c.sweep_order(root.min(n - 1)) } else { Vec::new() };
    let contact = |b: [f64; 2], o: &Circle, rb: f64| -> Option<[f64; 2]> {
        let d = dist(b, o.center);
        let min = o.radius + rb;
        if d >= min {
            return None;
        }
        let dir = if d > 1e-12 {
            [(b[0] - o.center[0]) / d, (b[1] - o.center[1]) / d]
        } else {
            [1.0, 0.0]
        };
        Some([o.center[0] + dir[0] * min, o.center[1] + dir[1] * min])
    };

    for it in 0..iterations.max(1) {
        // converged well inside the tolerance: further sweeps change nothing visible
        if it % 8 == 7 && c.max_stretch() < eps_chain * CONVERGED_FRACTION {
            break;
        }
        for &(i, j) in &order {
            let (wi, wj) = (inv_mass[i], inv_mass[j]);
            let w = wi + wj;
            if w == 0.0 {
                continue;
            }
            let (pi, pj) = (c.beads[i], c.beads[j]);
            let d = dist(pi, pj);
            if d < 1e-12 {
                continue;
            }
            let k = (d - c.spacing) / d;
            let delta = [(pj[0] - pi[0]) * k, (pj[1] - pi[1]) * k];
            c.beads[i][0] += wi / w * delta[0];
            c.beads[i][1] += wi / w * delta[1];
            c.beads[j][0] -= wj / w * delta[0];
            c.beads[j][1] -= wj / w * delta[1];
        }
        for i in 0..n {
            if !collides[i] || inv_mass[i] == 0.0 {
                continue;
            }
            for o in obstacles {
                if let Some(p) = contact(c.beads[i], o, c.bead_radius) {
                    c.beads[i] = p;
                }
            }
        }
    }
    let max_stretch = c.max_stretch();
    let collided: Vec<Circle> = obstacles.to_vec();
    let mut max_penetration = 0.0f64;
    for i in 0..n {
        if !collides[i] {
            continue;
        }
        for o in &collided {
            let pen = o.radius + c.bead_radius - dist(c.beads[i], o.center);
            max_penetration = max_penetration.max(pen);
        }
    }
    SettleOutcome {
        satisfied: max_stretch <= eps_chain && max_penetration <= eps_pen,
        chain: c,
        max_stretch,
        max_penetration,
    }
}

/// Winding number of a closed polyline about `p`, from summed signed angles.
pub fn winding_number(poly: &[[f64; 2]], p: [f64; 2]) -> i32 {
    let n = poly.len();
    if n < 3 {
        return 0;
    }
    let mut total = 0.0;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let a0 = (a[1] - p[1]).atan2(a[0] - p[0]);
        let b0 = (b[1] - p[1]).atan2(b[0] - p[0]);
        total += crate::geometry::normalize_angle(b0 - a0);
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i32
}
