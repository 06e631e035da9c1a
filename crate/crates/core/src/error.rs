use thiserror::Error;

#[derive(Debug, Error)]
pub enum HbvmError {
    #[error("polynomial index must be >= 1, got {0}")]
    InvalidIndex(usize),

    #[error("value {value} outside of the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("invalid node set: {0}")]
    InvalidNodes(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("invalid method parameters: {0}")]
    InvalidSpec(String),

    #[error(
        "quadrature too weak for B(2s): exactness degree {exactness} < 2s-1 = {required} (k={k}, s={s})"
    )]
    QuadratureTooWeak {
        k: usize,
        s: usize,
        exactness: i64,
        required: usize,
    },

    #[error("Butcher matrix has numerical rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("stability function has a pole at z = {re} + {im}i")]
    Pole { re: f64, im: f64 },

    #[error(
        "stage solver did not converge in {iterations} iterations (last residual {residual:e})"
    )]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error(
        "fixed-point iteration diverging (residual {residual:e} after {iterations} iterations); try the Newton solver"
    )]
    FixedPointDiverged { iterations: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<HbvmError>,
    },

    #[error("{0}")]
    Config(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HbvmError>;
