use crate::series::VarTag;

/// Errors raised by the arithmetic, differentiation and model layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Operands were differentiated with respect to different variables.
    #[error("perturbation confusion: {0}")]
    PerturbationConfusion(String),

    #[error("tag mismatch: expected {expected:?}, found {found:?}")]
    TagMismatch { expected: VarTag, found: VarTag },

    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    /// Division by (or reciprocal of) a series with zero constant term.
    #[error("singular series: zero constant term")]
    Singularity,

    #[error("derivative order {requested} out of range for order-{order} series")]
    Arity { requested: usize, order: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("likelihood is zero; gradient undefined")]
    ZeroLikelihood,

    /// Floating-point scalars overflowed or underflowed beyond recovery.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("optimizer initialization failed: {0}")]
    Initialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
