use std::fmt;
use std::str::FromStr;

use mrav_autodiff::{OptimizerConfig, Padding};
use mrav_core::sampling::AugmentConfig;
use serde::{Deserialize, Serialize};

use crate::error::AgentError;

/// Channels of one rendered observation (colour then height).
pub const OBS_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    /// Conditioned on the final goal image.
    #[serde(rename = "GCTN")]
    Gctn,
    /// Conditioned on the next image of a demonstration sequence.
    #[serde(rename = "SCTN")]
    Sctn,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Gctn => "GCTN",
            AgentKind::Sctn => "SCTN",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GCTN" => Ok(AgentKind::Gctn),
            "SCTN" => Ok(AgentKind::Sctn),
            _ => Err(AgentError::Config(format!("unknown agent `{s}`"))),
        }
    }
}

/// Hourglass layout: full-resolution stem, one stride-2 stage, two
/// half-resolution layers with a residual, then upsampling and a head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcnSpec {
    pub widths: [usize; 4],
    pub padding: Padding,
}

impl Default for FcnSpec {
    fn default() -> Self {
        Self {
            widths: [16, 32, 32, 32],
            padding: Padding::Circular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Observation and goal stacked for the pick network.
    pub input_channels: usize,
    pub rotations: usize,
    pub crop_size: usize,
    /// Output channels of the key, query and goal networks.
    pub feature_dim: usize,
    pub fcn: FcnSpec,
    pub height: usize,
    pub width: usize,
    pub optimizer: OptimizerConfig,
    /// `None` trains on the raw samples.
    pub augment: Option<AugmentConfig>,
    pub init_seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            input_channels: 2 * OBS_CHANNELS,
            rotations: 8,
            crop_size: 17,
            feature_dim: 8,
            fcn: FcnSpec::default(),
            height: 160,
            width: 80,
            optimizer: OptimizerConfig::adam(1e-3),
            augment: Some(AugmentConfig::default()),
            init_seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: String| Err(AgentError::Config(m));
        if self.input_channels != 2 * OBS_CHANNELS {
            return fail(format!("input_channels must be {}, got {}", 2 * OBS_CHANNELS, self.input_channels));
        }
        if self.rotations == 0 {
            return fail("rotations must be at least 1".into());
        }
        if self.crop_size % 2 == 0 {
            return fail(format!("crop_size must be odd, got {}", self.crop_size));
        }
        if self.feature_dim == 0 || self.fcn.widths.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        if self.fcn.widths[1] != self.fcn.widths[3] {
            return fail("the residual needs widths[1] == widths[3]".into());
        }
        if self.height % 2 != 0 || self.width % 2 != 0 || self.height == 0 || self.width == 0 {
            return fail(format!(
                "image size {}×{} must be even so the hourglass returns to full size",
                self.height, self.width
            ));
        }
        if self.optimizer.lr() < 0.0 || !self.optimizer.lr().is_finite() {
            return fail("learning rate must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn with_size(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }
}
