use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel has no pointwise representation")]
    NoPointwiseValue,

    #[error("kernel {0} is unsupported by this backend")]
    UnsupportedKernel(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds requested {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("step size underflow at t = {t}: h = {h:e} after {steps} steps")]
    StepSizeUnderflow { t: f64, h: f64, steps: usize },

    #[error("too many integration steps ({steps}) before t = {t}")]
    TooManySteps { t: f64, steps: usize },

    #[error("mode truncation too small at n_max = {n_max}: {reason}; increase n_max")]
    Truncation { n_max: usize, reason: String },

    #[error("insufficient time resolution: {0}")]
    Resolution(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no decoherence-time crossing in any sweep point")]
    SweepEmpty,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
