use thiserror::Error;

pub type Result<T, E = DuioError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DuioError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("node index {index} out of range (network has {count} nodes)")]
    Index { index: usize, count: usize },

    #[error("communication graph is not connected (algebraic connectivity {lambda2:e})")]
    Connectivity { lambda2: f64 },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("offline data not exciting enough: {block} (rank {rank}, required {required})")]
    Excitation {
        block: String,
        rank: usize,
        required: usize,
    },

    #[error("validation-only unknown-input record is not available")]
    OracleUnavailable,

    #[error("node {node}: unknown-input decoupling not solvable (rank(C B_p) = {rank_cbp} < rank(B_p) = {rank_bp})")]
    Solvability {
        node: usize,
        rank_cbp: usize,
        rank_bp: usize,
    },

    #[error("design failed: {0}")]
    Design(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("data inconsistent with an LTI model: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Consistency { residual: f64, tolerance: f64 },

    #[error("run has no samples")]
    EmptyRun,

    #[error("config: {0}")]
    Config(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
