use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty filter window")]
    EmptyWindow,

    #[error("filter window has {got} samples, at least {need} required")]
    WindowTooShort { got: usize, need: usize },

    #[error("window mixes samples from different robot pairs")]
    MixedPairs,

    #[error("no consensus: best set has {support} samples, {needed} required")]
    NoConsensus { support: usize, needed: usize },

    #[error("incomplete range set")]
    IncompleteRangeSet,

    #[error("structure estimation needs at least 4 robots, got {0}")]
    TooFewRobots(usize),

    #[error("range triangle inequality violated: r{i}{j} = {rij:.3} > r{i}{k} + r{k}{j} + slack")]
    TriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        rij: f64,
    },

    #[error("structure optimization failed")]
    StructureFailed,

    #[error("degenerate configuration")]
    DegenerateConfiguration,

    #[error("alignment degenerate")]
    AlignmentDegenerate,

    #[error("total alignment weight is zero")]
    ZeroWeight,

    #[error("empty epoch")]
    EmptyEpoch,

    #[error("epoch end must be strictly after its start")]
    InvalidEpoch,

    #[error("invalid feature depth {0}")]
    InvalidDepth(f64),

    #[error("optimizer diverged")]
    OptimizerDiverged,

    #[error("initialization failed")]
    InitializationFailed,

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("trajectories are not on the same step grid")]
    GridMismatch,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
