use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A discretization that would break monotonicity of the backward step.
    #[error("rejected configuration: {0}")]
    RejectedConfiguration(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A Girsanov kernel whose conjugate penalty is infinite somewhere.
    #[error("inadmissible kernel: {0}")]
    InadmissibleKernel(String),

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("evaluation error at state {state:?}: {message}")]
    Evaluation { state: Vec<f64>, message: String },

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
