use thiserror::Error;

/// Errors raised by the library. Per-site failures inside batch pipelines
/// are data, not errors, and never surface through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value is rational within working precision (denominator {denominator})")]
    RationalWithinPrecision { denominator: u128 },

    #[error("frequency is rationally dependent: <{n:?}, alpha> is an integer")]
    RationalFrequency { n: Vec<i64> },

    #[error("k_cut = {k_cut} leaves a tail bound of {tail:.3e}; need k_cut >= {required}")]
    CutoffTooSmall { k_cut: usize, tail: f64, required: usize },

    #[error("matrix is not elliptic (trace {trace})")]
    NotElliptic { trace: f64 },

    #[error("rotation number {rho} is inconsistent with the eigenvalues of the matrix")]
    InconsistentRotation { rho: f64 },

    #[error("diagonalizer norm {norm:.3e} exceeds the admissible bound {bound:.3e}")]
    DiagonalizerTooLarge { norm: f64, bound: f64 },

    #[error("perturbation {delta:.3e} exceeds the admissible threshold {threshold:.3e}")]
    PerturbationTooLarge { delta: f64, threshold: f64 },

    #[error("cocycle is not homotopic to the identity (winding {winding:?}); factor out the degree first")]
    NonTrivialHomotopy { winding: Vec<i64> },

    #[error("grid resolution {resolution} too coarse; need at least {required}")]
    UnderResolved { resolution: usize, required: usize },

    #[error("singular conjugation at x = {x:?} (det {det:.3e})")]
    SingularConjugation { x: Vec<f64>, det: f64 },

    #[error("box of dimension {dim} too large (~{megabytes} MB)")]
    BoxTooLarge { dim: usize, megabytes: usize },

    #[error("eigensolver failed to converge at index {index} after {iterations} iterations")]
    EigenNoConvergence { index: usize, iterations: usize },

    #[error("resonance: divisor {divisor:.3e} at k = {k:?}")]
    Resonance { k: Vec<i64>, divisor: f64 },

    #[error("KAM iteration did not converge; residual history {history:?}")]
    NoConvergence { history: Vec<f64> },

    #[error("degenerate conjugation: ||b11||_2 = {norm:.3e}")]
    DegenerateConjugation { norm: f64 },

    #[error("too few usable shells for a decay fit ({found} < {required})")]
    TooFewShells { found: usize, required: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
