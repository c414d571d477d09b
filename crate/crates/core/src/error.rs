use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pose ({x}, {y}) lies outside the workspace")]
    OutOfBounds { x: f64, y: f64 },
    #[error("pixel ({row}, {col}) outside {height}x{width} grid")]
    PixelOutOfRange {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("grid data length {got} does not match shape ({expected})")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite grid value at flat index {index}")]
    NonFinite { index: usize },
    #[error("workspace map needs positive resolution and nonzero size")]
    InvalidMap,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unknown task kind `{0}`")]
    UnknownKind(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("a problem needs 1 to 3 modules, got {0}")]
    ModuleCount(usize),
    #[error("task kind {0} appears twice in one problem")]
    DuplicateKind(String),
    #[error("module footprints overlap: {0} and {1}")]
    Overlap(String, String),
    #[error("task already complete, nothing to demonstrate")]
    AlreadyComplete,
    #[error("demonstration of {task} exceeded {max_steps} steps")]
    DemoFailed { task: String, max_steps: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported format version {version} at offset {offset}")]
    BadVersion { version: u16, offset: usize },
    #[error("truncated data at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed record at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("demonstrator success rate below 1% after {attempted} attempts ({kept} kept)")]
    LowSuccessRate { kept: usize, attempted: usize },
    #[error("dataset needs at least one episode")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("unknown task kind `{0}` for task weighting")]
    UnknownTask(String),
    #[error("task list is empty")]
    NoTasks,
    #[error("dataset has no episodes")]
    EmptyDataset,
    #[error("weights must be positive and finite")]
    BadWeights,
    #[error("episode {episode} has {got} segments, the problem has {expected} tasks")]
    SegmentMismatch { episode: usize, expected: usize, got: usize },
    #[error("final-goal sampling needs one goal image per episode ({expected}), got {got}")]
    MissingGoals { expected: usize, got: usize },
}
