//! Tabletop world for compositional pick-and-place: geometry, a quasi-static
//! 2-D simulator with stackable blocks and bead chains, the four task modules,
//! scripted demonstrators, the episode dataset format, and training samplers.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod sampling;
pub mod sim;
pub mod tasks;

pub use error::{DatasetError, GeometryError, SamplingError, TaskError};
pub use geometry::{GridImage, PixelCoord, PixelTransform, Pose2, WorkspaceMap};
