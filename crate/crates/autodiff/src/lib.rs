//! Small dense tensors with a recording tape for reverse-mode gradients,
//! enough to train single-sample fully convolutional networks on CPU.

pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod optim;
pub mod tape;
pub mod tensor;
mod xcorr;

pub use checkpoint::Checkpoint;
pub use conv::Padding;
pub use error::{AutodiffError, CheckpointError};
pub use optim::{Optimizer, OptimizerConfig};
pub use tape::{softmax_xent, Tap, Tape, Var};
pub use tensor::{Scalar, Tensor};
