use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum ConvexifyError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("ellipticity check failed: {0}")]
    Ellipticity(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Carleman weight exponent overflow: lambda={lambda}, nu={nu}, a={a} (combined exponent {exponent:.3} > 700)")]
    WeightOverflow {
        lambda: f64,
        nu: f64,
        a: f64,
        exponent: f64,
    },

    #[error("infeasible boundary data: ||W_bc||_H4 = {norm:.6e} exceeds ball radius R = {radius:.6e}")]
    InfeasibleData { norm: f64, radius: f64 },

    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    #[error("exponent cap exceeded: |lambda_k| * T_max = {value:.3e} > cap {cap:.3e}")]
    ExponentCap { value: f64, cap: f64 },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ConvexifyError>;
