use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("derivative order {order} exceeds cap {cap}")]
    DerivativeOrder { order: u32, cap: u32 },

    #[error("operator with non-positive homogeneity requires a zero-mean field (|mean coefficient| = {mean:.3e})")]
    NonZeroMean { mean: f64 },

    #[error("mollifier width {epsilon} exceeds the admissible bound {max} (L/16)")]
    MollifierWidth { epsilon: f64, max: f64 },

    #[error("invalid radii ladder: {0}")]
    RadiiLadder(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("solver blow-up diagnostic at t = {time}: non-finite values after step {step}")]
    BlowUp { time: f64, step: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("requested window out of range: {0}")]
    WindowOutOfRange(String),

    #[error("scale parameter out of range: {0}")]
    ScaleParam(String),

    #[error("pressure decomposition precondition failed: Poisson residual {residual:.3e} > {tol:.3e}")]
    PreconditionResidual { residual: f64, tol: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate quantity in scaling fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed snapshot header: {0}")]
    MalformedHeader(String),

    #[error("snapshot size mismatch: expected {expected} bytes of payload, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("unsupported snapshot format: {0}")]
    UnsupportedFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
