use thiserror::Error;

/// Errors shared by all solver modules.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field dimensions {found:?} do not match grid {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("boundary flux compatibility violated: residual flux {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    IncompatibleFlux { residual: f64, tolerance: f64 },

    #[error("non-finite value encountered in {context} at step {step}")]
    NonFinite { context: String, step: usize },

    #[error("time step underflow at step {step}: dt = {dt:.3e}")]
    CflUnderflow { step: usize, dt: f64 },

    #[error("Gram matrix is not positive definite (pivot {pivot:.3e})")]
    GramNotPositiveDefinite { pivot: f64 },

    #[error("boundary-layer band [{sigma:.3e}, {two_sigma:.3e}] holds {layers} radial node layers; need at least 2 (refine n_r or enlarge sigma)")]
    BandTooThin {
        sigma: f64,
        two_sigma: f64,
        layers: usize,
    },

    #[error("test function violates the support condition: {0}")]
    UnsupportedTestFunction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot schedule mismatch between sweep members")]
    ScheduleMismatch,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
