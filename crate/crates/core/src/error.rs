use thiserror::Error;

pub type Result<T> = std::result::Result<T, QlsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QlsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("symbol is singular at xi = 0: {0}")]
    SingularSymbol(String),

    #[error("Neumann series diverged after {terms} terms: R too small / Lambda not invertible")]
    NeumannDivergence { terms: usize },

    #[error("Neumann series did not reach tolerance within {terms} terms (last increment {last_increment:e})")]
    NeumannNotConverged { terms: usize, last_increment: f64 },

    #[error("degenerate covector |xi| = {0:e}")]
    DegenerateCovector(f64),

    #[error("step rejected at s = {s}: per-step drift of h = {drift:e} after {halvings} halvings")]
    StepRejected { s: f64, drift: f64, halvings: u32 },

    #[error("perturbation too large for flat escape symbol: no N <= {n_max} works (worst point x = {worst_x:?}, xi = {worst_xi:?})")]
    NoEscapeWeight {
        n_max: u32,
        worst_x: Vec<f64>,
        worst_xi: Vec<f64>,
    },

    #[error("lower bound already violated at t = 0 (B* = {0:e})")]
    BoundViolatedAtStart(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("ball excursion: max |z| = {max_z} exceeds M = {radius}")]
    BallExcursion { max_z: f64, radius: f64 },

    #[error("blow-up at t = {t}: ||u||_2 = {norm:e} exceeds 1e6 ||u0||_2 = {limit:e}")]
    BlowUp { t: f64, norm: f64, limit: f64 },

    #[error("not contracting: shrink T or raise epsilon (ratios {ratios:?})")]
    NotContracting { ratios: Vec<f64> },

    #[error("Picard iteration did not converge in {iterations} iterations (last difference {last:e})")]
    PicardNotConverged { iterations: usize, last: f64 },

    #[error("solution left X_(M0,T): sup_t ||u||_H^s = {norm} > M0 = {m0}")]
    OutsideSolutionBall { norm: f64, m0: f64 },

    #[error("unknown coefficient family '{0}'")]
    UnknownFamily(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QlsError {
    fn from(e: std::io::Error) -> Self {
        QlsError::Io(e.to_string())
    }
}
