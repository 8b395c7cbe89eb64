use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numerical kernel and the training driver.
#[derive(Debug, Clone, PartialEq)]
pub enum DsenError {
    /// A matrix or layer was given an operand of the wrong shape.
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A standalone distance was requested on a zero-norm vector.
    ZeroNormVector { which: &'static str },
    /// A gradient block contained NaN or infinity.
    NonFiniteGradient { block: String },
    /// A loss term became NaN or infinite during training.
    NonFiniteLoss { term: &'static str, epoch: usize },
    /// The training split is empty or a precondition on the config failed.
    InvalidConfig { reason: String },
    /// The unseen attribute set was empty but the ranking branch was required.
    EmptyUnseenSet,
    /// A class referenced during evaluation has no samples.
    EmptyClass { class_id: usize },
}

impl fmt::Display for DsenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DsenError::DimensionMismatch { op, expected, got } => write!(
                f,
                "{op}: dimension mismatch, expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            DsenError::ZeroNormVector { which } => {
                write!(f, "cosine distance: {which} has zero norm")
            }
            DsenError::NonFiniteGradient { block } => {
                write!(f, "non-finite gradient in parameter block {block}")
            }
            DsenError::NonFiniteLoss { term, epoch } => {
                write!(f, "loss term {term} became non-finite at epoch {epoch}")
            }
            DsenError::InvalidConfig { reason } => write!(f, "invalid config: {reason}"),
            DsenError::EmptyUnseenSet => {
                write!(f, "ranking branch requires a non-empty unseen attribute set")
            }
            DsenError::EmptyClass { class_id } => {
                write!(f, "class {class_id} has no samples in the evaluated split")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DsenError {}
