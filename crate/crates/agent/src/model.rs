//! The four networks of a transporter agent and the action-value maps they
//! produce.
//!
//! Picking scores every pixel from the observation stacked with the goal.
//! Placing multiplies key and query features of the observation by goal
//! features, crops the query around the pick pixel at `R` rotations and
//! slides each crop over the key map.

use std::f64::consts::TAU;

use mrav_autodiff::{AutodiffError, Checkpoint, Scalar, Tap, Tape, Tensor, Var};
use mrav_core::geometry::{normalize_angle, rotate_crop_taps, Sampling};
use mrav_core::sim::Action;
use mrav_core::{GridImage, PixelCoord, Pose2, WorkspaceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AgentConfig, OBS_CHANNELS};
use crate::error::AgentError;
use crate::fcn::Fcn;

/// Heights are in metres; this brings a block's height to about one.
pub const HEIGHT_SCALE: f32 = 50.0;

pub const NET_NAMES: [&str; 4] = ["pick", "key", "query", "goal"];

/// Channel-first tensor of an observation with heights rescaled.
pub fn image_tensor(img: &GridImage) -> Result<Tensor<f32>, AgentError> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if c != OBS_CHANNELS {
        return Err(AgentError::ImageShape {
            expected: (h, w, OBS_CHANNELS),
            got: (h, w, c),
        });
    }
    let src = img.data();
    let mut out = vec![0.0f32; c * h * w];
    for i in 0..h * w {
        for ch in 0..c {
            let v = src[i * c + ch];
            out[ch * h * w + i] = if ch >= 3 { v * HEIGHT_SCALE } else { v };
        }
    }
    Ok(Tensor::from_vec(&[c, h, w], out))
}

/// Angle of rotation bin `r` out of `rotations`.
pub fn bin_angle(r: usize, rotations: usize) -> f64 {
    TAU * r as f64 / rotations as f64
}

/// Nearest rotation bin of an angle.
pub fn angle_bin(theta: f64, rotations: usize) -> usize {
    let step = TAU / rotations as f64;
    let b = (normalize_angle(theta) / step).round() as i64;
    b.rem_euclid(rotations as i64) as usize
}

/// Bilinear crop taps for each rotation bin around `pick`.
///
/// A crop sampled at `c + R(−θ)·d` shows the neighbourhood of `c` turned by
/// `+θ`, which is how the picked object looks after a `+θ` place.
pub fn rotation_taps(height: usize, width: usize, pick: PixelCoord, rotations: usize, size: usize) -> Vec<Vec<Tap>> {
    (0..rotations)
        .map(|r| rotate_crop_taps(height, width, pick, -bin_angle(r, rotations), size, Sampling::Bilinear))
        .collect()
}

/// Crops `psi_query: [d, H, W]` at every rotation and correlates the stack
/// with `psi_key: [d, H, W]`, giving `[R, H, W]`.
pub fn transport<T: Scalar>(
    tape: &mut Tape<T>,
    psi_query: Var,
    psi_key: Var,
    pick: PixelCoord,
    rotations: usize,
    size: usize,
) -> Result<Var, AutodiffError> {
    let (_, h, w) = tape.value(psi_query).chw();
    let mut crops = Vec::with_capacity(rotations);
    for taps in rotation_taps(h, w, pick, rotations, size) {
        crops.push(tape.gather(psi_query, size, size, taps)?);
    }
    let query = tape.stack(&crops)?;
    tape.correlate(query, psi_key)
}

/// Parameters of all four networks plus the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub config: AgentConfig,
    names: Vec<String>,
    params: Vec<Tensor<f32>>,
    /// `(network, first parameter index)` in [`NET_NAMES`] order.
    nets: [(Fcn, usize); 4],
}

/// Tape handles of one bundle's parameters.
pub struct Bound {
    vars: Vec<Var>,
    nets: [(Fcn, usize); 4],
}

impl Bound {
    fn net(&self, i: usize) -> (Fcn, &[Var]) {
        let (f, off) = self.nets[i];
        (f, &self.vars[off..off + 10])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Picked pixel and the place pixel with its rotation bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelAction {
    pub pick: PixelCoord,
    pub place: PixelCoord,
    pub rotation: usize,
}

fn layout(config: &AgentConfig) -> [(Fcn, usize); 4] {
    let spec = config.fcn;
    let nets = [
        Fcn::new(config.input_channels, 1, spec),
        Fcn::new(OBS_CHANNELS, config.feature_dim, spec),
        Fcn::new(OBS_CHANNELS, config.feature_dim, spec),
        Fcn::new(OBS_CHANNELS, config.feature_dim, spec),
    ];
    let mut off = 0;
    nets.map(|f| {
        let here = off;
        off += f.param_shapes().len();
        (f, here)
    })
}

impl AgentBundle {
    /// Fresh parameters: weights uniform in `±1/√fan_in`, biases zero.
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let nets = layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (i, (f, _)) in nets.iter().enumerate() {
            for (name, shape) in f.param_shapes() {
                let t = if shape.len() == 4 {
                    let fan_in = (shape[1] * shape[2] * shape[3]) as f32;
                    let bound = 1.0 / fan_in.sqrt();
                    let n = shape.iter().product();
                    Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
                } else {
                    Tensor::zeros(&shape)
                };
                names.push(format!("{}.{name}", NET_NAMES[i]));
                params.push(t);
            }
        }
        Ok(Self {
            config,
            names,
            params,
            nets,
        })
    }

    /// All parameters set to zero (a degenerate agent with flat action maps).
    pub fn zeroed(config: AgentConfig) -> Result<Self, AgentError> {
        let mut b = Self::new(config)?;
        for p in &mut b.params {
            p.data_mut().fill(0.0);
        }
        Ok(b)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Loads the parameters onto `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape<f32>, trainable: bool) -> Bound {
        let vars = self.params.iter().map(|p| tape.leaf(p.clone(), trainable)).collect();
        Bound { vars, nets: self.nets }
    }

    fn check_image(&self, img: &GridImage) -> Result<(), AgentError> {
        let got = (img.height(), img.width(), img.channels());
        let expected = (self.config.height, self.config.width, OBS_CHANNELS);
        if got != expected {
            return Err(AgentError::ImageShape { expected, got });
        }
        Ok(())
    }

    /// Puts observation and goal on the tape; returns `(o, g, o ⊕ g)`.
    pub fn inputs(&self, tape: &mut Tape<f32>, o: &GridImage, g: &GridImage) -> Result<(Var, Var, Var), AgentError> {
        self.check_image(o)?;
        self.check_image(g)?;
        let ov = tape.constant(image_tensor(o)?);
        let gv = tape.constant(image_tensor(g)?);
        let og = tape.concat(&[ov, gv])?;
        Ok((ov, gv, og))
    }

    /// Pick logits `[1, H, W]`.
    pub fn pick_logits(&self, tape: &mut Tape<f32>, b: &Bound, og: Var) -> Result<Var, AgentError> {
        let (f, p) = b.net(0);
        Ok(f.forward(tape, p, og)?)
    }

    /// Goal-modulated `(ψ_query, ψ_key)` feature maps.
    pub fn place_features(&self, tape: &mut Tape<f32>, b: &Bound, o: Var, g: Var) -> Result<(Var, Var), AgentError> {
        let (fk, pk) = b.net(1);
        let key = fk.forward(tape, pk, o)?;
        let (fq, pq) = b.net(2);
        let query = fq.forward(tape, pq, o)?;
        let (fg, pg) = b.net(3);
        let goal = fg.forward(tape, pg, g)?;
        let psi_query = tape.hadamard(query, goal)?;
        let psi_key = tape.hadamard(key, goal)?;
        Ok((psi_query, psi_key))
    }

    /// Place logits `[R, H, W]` for a given pick pixel.
    pub fn place_logits(&self, tape: &mut Tape<f32>, b: &Bound, o: Var, g: Var, pick: PixelCoord) -> Result<Var, AgentError> {
        if pick.row >= self.config.height || pick.col >= self.config.width {
            return Err(mrav_core::GeometryError::PixelOutOfRange {
                row: pick.row,
                col: pick.col,
                height: self.config.height,
                width: self.config.width,
            }
            .into());
        }
        let (psi_query, psi_key) = self.place_features(tape, b, o, g)?;
        Ok(transport(
            tape,
            psi_query,
            psi_key,
            pick,
            self.config.rotations,
            self.config.crop_size,
        )?)
    }

    pub fn pick_q(&self, o: &GridImage, g: &GridImage) -> Result<Tensor<f32>, AgentError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let (_, _, og) = self.inputs(&mut tape, o, g)?;
        let q = self.pick_logits(&mut tape, &b, og)?;
        let (_, h, w) = tape.value(q).chw();
        Ok(tape.value(q).clone().reshape(&[h, w]))
    }

    /// `[R, H, W]` place values.
    pub fn place_q(&self, o: &GridImage, g: &GridImage, pick: PixelCoord) -> Result<Tensor<f32>, AgentError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let (ov, gv, _) = self.inputs(&mut tape, o, g)?;
        let q = self.place_logits(&mut tape, &b, ov, gv, pick)?;
        Ok(tape.value(q).clone())
    }

    /// Greedy pick and place pixels; ties go to the row-major first entry.
    pub fn act_pixels(&self, o: &GridImage, g: &GridImage) -> Result<PixelAction, AgentError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let (ov, gv, og) = self.inputs(&mut tape, o, g)?;
        let pq = self.pick_logits(&mut tape, &b, og)?;
        let w = self.config.width;
        let hw = self.config.height * w;
        let pi = tape.value(pq).argmax();
        let pick = PixelCoord::new(pi / w, pi % w);
        let q = self.place_logits(&mut tape, &b, ov, gv, pick)?;
        let qi = tape.value(q).argmax();
        let (rotation, rest) = (qi / hw, qi % hw);
        Ok(PixelAction {
            pick,
            place: PixelCoord::new(rest / w, rest % w),
            rotation,
        })
    }

    /// Greedy action in world coordinates: the pick keeps a zero angle and
    /// the place carries the rotation-bin angle.
    pub fn act(&self, o: &GridImage, g: &GridImage, map: &WorkspaceMap) -> Result<Action, AgentError> {
        let px = self.act_pixels(o, g)?;
        let pick = map.pixel_to_world(px.pick)?;
        let place = map.pixel_to_world(px.place)?;
        let theta = normalize_angle(bin_angle(px.rotation, self.config.rotations));
        Ok(Action::new(
            Pose2::new(pick.x, pick.y, 0.0),
            Pose2::new(place.x, place.y, theta),
        ))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let metadata = serde_json::json!({
            "format": "mrav-agent",
            "config": self.config,
            "extra": extra,
        });
        Checkpoint {
            metadata,
            arrays: self.names.iter().cloned().zip(self.params.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, AgentError> {
        let config: AgentConfig = serde_json::from_value(c.metadata["config"].clone())
            .map_err(|e| AgentError::CheckpointMismatch(format!("config: {e}")))?;
        let mut b = Self::new(config)?;
        for (name, p) in b.names.iter().zip(b.params.iter_mut()) {
            let t = c.get(name)?;
            if t.shape() != p.shape() {
                return Err(AgentError::CheckpointMismatch(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            *p = t.clone();
        }
        if c.arrays.len() != b.params.len() {
            return Err(AgentError::CheckpointMismatch(format!(
                "{} arrays, expected {}",
                c.arrays.len(),
                b.params.len()
            )));
        }
        Ok(b)
    }

    /// Digest of every parameter bit pattern.
    pub fn param_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for p in &self.params {
            for v in p.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }
}
