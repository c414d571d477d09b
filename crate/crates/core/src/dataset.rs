//! Demonstration episodes, seed management, and the on-disk dataset format.
//!
//! A dataset directory holds `manifest.json` plus one `episode_NNNNN.mrav`
//! file per episode. Episode files are little-endian:
//!
//! ```text
//! "MRAV"  u16 version  u64 seed  u16 len + utf8 problem name
//! u32 steps     { grid, 6 × f64 action (pick x y θ, place x y θ), f64 δr }
//! u32 images    { grid }
//! u32 segments  { u32 first, u32 last }
//! grid = u32 H, u32 W, u32 C, H·W·C × f32 row-major (row, col, channel)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, TaskError};
use crate::geometry::{GridImage, Pose2, WorkspaceMap};
use crate::oracle::run_demo;
use crate::sim::{Action, SimParams};
use crate::tasks::ProblemSpec;

pub const MAGIC: &[u8; 4] = b"MRAV";
pub const FORMAT_VERSION: u16 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Held-out evaluation seeds start here (before the odd mapping).
pub const EVAL_SEED_BASE: u64 = 1 << 20;
/// Collection aborts once this many attempts have under 1% success.
pub const SUCCESS_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub observation: GridImage,
    pub action: Action,
    pub delta_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub problem: String,
    pub seed: u64,
    pub steps: Vec<EpisodeStep>,
    /// Observation after every step with positive reward, in order.
    pub sequence_images: Vec<GridImage>,
    /// Inclusive 0-based step range of each module, in problem order.
    pub segments: Vec<(usize, usize)>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Index into `sequence_images` of the first rewarded outcome at or after step `t`.
    pub fn goal_index(&self, t: usize) -> usize {
        let before = self.steps[..t].iter().filter(|s| s.delta_reward > 0.0).count();
        before.min(self.sequence_images.len().saturating_sub(1))
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.delta_reward).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let name = self.problem.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(self.steps.len() as u32).to_le_bytes());
        for s in &self.steps {
            put_grid(&mut out, &s.observation);
            for v in [
                s.action.pick.x,
                s.action.pick.y,
                s.action.pick.theta,
                s.action.place.x,
                s.action.place.y,
                s.action.place.theta,
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&s.delta_reward.to_le_bytes());
        }
        out.extend_from_slice(&(self.sequence_images.len() as u32).to_le_bytes());
        for g in &self.sequence_images {
            put_grid(&mut out, g);
        }
        out.extend_from_slice(&(self.segments.len() as u32).to_le_bytes());
        for &(a, b) in &self.segments {
            out.extend_from_slice(&(a as u32).to_le_bytes());
            out.extend_from_slice(&(b as u32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Episode, DatasetError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(DatasetError::BadMagic { offset: 0 });
        }
        let at = r.pos;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(DatasetError::BadVersion { version, offset: at });
        }
        let seed = r.u64()?;
        let name_len = r.u16()? as usize;
        let at = r.pos;
        let problem = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| DatasetError::Malformed {
            offset: at,
            reason: "problem name is not utf-8".into(),
        })?;
        let n_steps = r.u32()? as usize;
        let mut steps = Vec::with_capacity(n_steps.min(1 << 16));
        for _ in 0..n_steps {
            let observation = r.grid()?;
            let mut a = [0.0f64; 6];
            for v in a.iter_mut() {
                *v = r.f64()?;
            }
            let delta_reward = r.f64()?;
            steps.push(EpisodeStep {
                observation,
                action: Action::new(Pose2::new(a[0], a[1], a[2]), Pose2::new(a[3], a[4], a[5])),
                delta_reward,
            });
        }
        let n_images = r.u32()? as usize;
        let mut sequence_images = Vec::with_capacity(n_images.min(1 << 16));
        for _ in 0..n_images {
            sequence_images.push(r.grid()?);
        }
        let n_seg = r.u32()? as usize;
        let mut segments = Vec::with_capacity(n_seg.min(1 << 8));
        for _ in 0..n_seg {
            let at = r.pos;
            let a = r.u32()? as usize;
            let b = r.u32()? as usize;
            if a > b || b >= n_steps {
                return Err(DatasetError::Malformed {
                    offset: at,
                    reason: format!("segment ({a}, {b}) outside {n_steps} steps"),
                });
            }
            segments.push((a, b));
        }
        if r.pos != bytes.len() {
            return Err(DatasetError::Malformed {
                offset: r.pos,
                reason: "trailing bytes".into(),
            });
        }
        Ok(Episode {
            problem,
            seed,
            steps,
            sequence_images,
            segments,
        })
    }
}

fn put_grid(out: &mut Vec<u8>, g: &GridImage) {
    let (h, w, c) = g.shape();
    for d in [h, w, c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.reserve(g.data().len() * 4);
    for v in g.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(DatasetError::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos),
            }),
        }
    }
    fn u16(&mut self) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, DatasetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn grid(&mut self) -> Result<GridImage, DatasetError> {
        let at = self.pos;
        let h = self.u32()? as usize;
        let w = self.u32()? as usize;
        let c = self.u32()? as usize;
        let len = h
            .checked_mul(w)
            .and_then(|x| x.checked_mul(c))
            .filter(|&x| x <= 1 << 28)
            .ok_or_else(|| DatasetError::Malformed {
                offset: at,
                reason: format!("implausible grid shape {h}x{w}x{c}"),
            })?;
        let raw = self.take(len * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        GridImage::from_vec(h, w, c, data).map_err(|e| DatasetError::Malformed {
            offset: at,
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub problem: String,
    pub n: usize,
    pub seed_base: u64,
    /// Seeds of the kept episodes, in file order.
    pub seeds: Vec<u64>,
    pub attempted: usize,
    pub kept: usize,
    pub map: WorkspaceMap,
    pub sim: SimParams,
    /// Free-form record of the command that produced the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

/// Seed of the `k`-th demonstration attempt. Always even.
pub fn demo_seed(seed_base: u64, k: u64) -> u64 {
    2 * (seed_base + k)
}

/// Held-out evaluation seeds. Always odd, hence disjoint from demo seeds.
pub fn heldout_eval_seeds(_spec: &ProblemSpec, k: usize) -> Vec<u64> {
    (0..k as u64).map(|j| 2 * (EVAL_SEED_BASE + j) + 1).collect()
}

/// Collects `n` successful demonstrations, skipping failed attempts.
pub fn collect(spec: &ProblemSpec, n: usize, seed_base: u64, map: WorkspaceMap) -> Result<Dataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let mut episodes = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    let mut attempted = 0usize;
    while episodes.len() < n {
        let seed = demo_seed(seed_base, attempted as u64);
        attempted += 1;
        match run_demo(spec, seed, map) {
            Ok(ep) => {
                seeds.push(seed);
                episodes.push(ep);
            }
            Err(TaskError::DemoFailed { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        if attempted >= SUCCESS_WINDOW && (episodes.len() as f64) < 0.01 * attempted as f64 {
            return Err(DatasetError::LowSuccessRate {
                kept: episodes.len(),
                attempted,
            });
        }
    }
    Ok(Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            problem: spec.name(),
            n,
            seed_base,
            seeds,
            attempted,
            kept: n,
            map,
            sim: SimParams::default(),
            provenance: None,
        },
        episodes,
    })
}

pub fn episode_file(k: usize) -> String {
    format!("episode_{k:05}.mrav")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mpath = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&ds.manifest)?;
    json.push('\n');
    fs::write(&mpath, json).map_err(io_err(&mpath))?;
    for (k, ep) in ds.episodes.iter().enumerate() {
        let p = dir.join(episode_file(k));
        fs::write(&p, ep.encode()).map_err(io_err(&p))?;
    }
    Ok(())
}

pub fn load(dir: &Path) -> Result<Dataset, DatasetError> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::BadVersion {
            version: manifest.format_version,
            offset: 0,
        });
    }
    let mut episodes = Vec::with_capacity(manifest.n);
    for k in 0..manifest.n {
        let p = dir.join(episode_file(k));
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let ep = Episode::decode(&bytes)?;
        if ep.problem != manifest.problem {
            return Err(DatasetError::Malformed {
                offset: 0,
                reason: format!("episode {k} is for `{}`, manifest says `{}`", ep.problem, manifest.problem),
            });
        }
        episodes.push(ep);
    }
    Ok(Dataset { manifest, episodes })
}
