//! Transporter agents conditioned on goal images, their training loop and
//! the evaluation protocol used to compare them.

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod fcn;
pub mod goal;
pub mod model;
pub mod train;

pub use config::{AgentConfig, AgentKind, FcnSpec};
pub use error::AgentError;
pub use goal::NextStepGoal;
pub use model::{AgentBundle, PixelAction};
pub use train::{StepLosses, Trainer};
