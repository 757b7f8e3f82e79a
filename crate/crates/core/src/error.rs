use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the direction threshold")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("margin domain violated: target angle {theta} with margin term {margin} exceeds pi")]
    MarginDomain { theta: f64, margin: f64 },

    #[error("margin derivative is singular at a zero target angle")]
    SingularAngle,

    #[error("loss evaluation returned a non-finite value ({0})")]
    NonFiniteLoss(f64),

    #[error("training diverged at step {step}: loss {loss}")]
    DivergedLoss { step: usize, loss: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}
