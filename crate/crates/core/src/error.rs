use alloc::string::String;
use core::fmt;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not compose.
    Dimension {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A loss handed to `backward` was not a 1×1 node.
    NonScalarLoss { rows: usize, cols: usize },
    /// Input for which the requested transform is undefined (constant vectors, zero variance, ...).
    DegenerateInput(&'static str),
    /// A gradient entry was NaN or infinite.
    NonFiniteGradient { layer: usize },
    /// A training loss became NaN or infinite.
    Divergence { stage: &'static str, epoch: usize, batch: usize },
    /// Caller-side contract violation.
    Precondition(String),
    /// An iterative solver did not reach its tolerance.
    Convergence { what: &'static str, iterations: usize },
    /// Boundary synthesis gave up after exhausting its attempt budget.
    SynthesisExhausted { attempts: usize, found: usize, target: usize },
    /// A lookup referenced an id or epoch that does not exist.
    NotFound(String),
    /// Non-finite value produced while rendering.
    Render { row: usize, col: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, expected, found } => write!(
                f,
                "dimension mismatch in {op}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonScalarLoss { rows, cols } => {
                write!(f, "loss node must be 1x1, got {rows}x{cols}")
            }
            Error::DegenerateInput(what) => write!(f, "degenerate input: {what}"),
            Error::NonFiniteGradient { layer } => {
                write!(f, "non-finite gradient in layer {layer}")
            }
            Error::Divergence { stage, epoch, batch } => {
                write!(f, "{stage} diverged at epoch {epoch}, batch {batch}")
            }
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::Convergence { what, iterations } => {
                write!(f, "{what} did not converge within {iterations} iterations")
            }
            Error::SynthesisExhausted { attempts, found, target } => write!(
                f,
                "boundary synthesis found {found}/{target} points after {attempts} attempts"
            ),
            Error::NotFound(what) => write!(f, "not found: {what}"),
            Error::Render { row, col } => {
                write!(f, "decoder produced a non-finite value at pixel ({row}, {col})")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
