use thiserror::Error;

use crate::flow::StepFailure;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {points} points, over the memory budget of {budget}")]
    GridTooLarge { points: usize, budget: usize },

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("metric is not positive definite at node {node}")]
    SingularMetric { node: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tensor rank/valence mismatch: {0}")]
    Valence(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cutoff: {0}")]
    Cutoff(String),

    #[error("domain too small: {0}")]
    DegenerateDomain(String),

    #[error("ball of radius {radius} reaches the grid boundary collar")]
    BallTouchesBoundary { radius: f64 },

    #[error("gauge displacement leaves the grid at node {node}")]
    DisplacementOutOfGrid { node: usize },

    #[error("flow step failed: {0}")]
    Step(StepFailure),

    #[error("empty time window: {0}")]
    EmptyWindow(String),

    #[error("verification: {0}")]
    Verification(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("field file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<StepFailure> for Error {
    fn from(f: StepFailure) -> Self {
        Error::Step(f)
    }
}
