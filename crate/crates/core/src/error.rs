use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit the requested operation.
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    NotSquare {
        rows: usize,
        cols: usize,
    },
    NonFinite,
    EmptyMatrix,
    /// Shifted QR did not deflate within the iteration cap.
    NoConvergence {
        iterations: usize,
    },
    /// The eigenvector matrix is numerically singular.
    NotDiagonalizable {
        condition: f64,
    },
    NotHermitian {
        deviation: f64,
    },
    Singular,
    IndexOutOfRange {
        index: usize,
        dim: usize,
    },
    /// A quantum object failed validation; `reason` says which invariant.
    InvalidState {
        reason: String,
    },
    InvalidPovm {
        reason: String,
    },
    InvalidChannel {
        reason: String,
    },
    NotUnitary {
        which: &'static str,
        deviation: f64,
    },
    /// Two Hadamard-test specs that should differ only in the phase bit do not.
    MismatchedPair,
    /// `|A| > k`: the Bernoulli probe model cannot produce this value.
    OutOfBernoulliRange {
        value: f64,
        scale: f64,
    },
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    /// Every eigenvalue was clipped to zero during projection.
    UnrecoverableEstimate,
    NonHermitianReconstruction {
        deviation: f64,
    },
    FitNotConverged {
        which: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { op, left, right } => write!(
                f,
                "dimension mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NotSquare { rows, cols } => write!(f, "matrix is not square ({rows}x{cols})"),
            Error::NonFinite => f.write_str("matrix contains non-finite entries"),
            Error::EmptyMatrix => f.write_str("matrix has no entries"),
            Error::NoConvergence { iterations } => {
                write!(
                    f,
                    "eigenvalue iteration did not converge after {iterations} iterations"
                )
            }
            Error::NotDiagonalizable { condition } => write!(
                f,
                "matrix is not diagonalizable (eigenvector condition number {condition:.3e})"
            ),
            Error::NotHermitian { deviation } => {
                write!(
                    f,
                    "matrix is not Hermitian (max |A - A†| = {deviation:.3e})"
                )
            }
            Error::Singular => f.write_str("matrix is singular"),
            Error::IndexOutOfRange { index, dim } => {
                write!(f, "index {index} out of range for dimension {dim}")
            }
            Error::InvalidState { reason } => write!(f, "invalid density operator: {reason}"),
            Error::InvalidPovm { reason } => write!(f, "invalid POVM element: {reason}"),
            Error::InvalidChannel { reason } => write!(f, "invalid channel: {reason}"),
            Error::NotUnitary { which, deviation } => write!(
                f,
                "gate {which} is not unitary (max |U†U - I| = {deviation:.3e}); \
                 use the algebraic expectation instead of the circuit path"
            ),
            Error::MismatchedPair => {
                f.write_str("Hadamard-test specs differ in more than the phase bit")
            }
            Error::OutOfBernoulliRange { value, scale } => write!(
                f,
                "value {value} exceeds the probe scale k = {scale}; |A| <= k is required"
            ),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::UnrecoverableEstimate => {
                f.write_str("unrecoverable estimate: every eigenvalue was clipped to zero")
            }
            Error::NonHermitianReconstruction { deviation } => write!(
                f,
                "clipped reconstruction is not Hermitian (deviation {deviation:.3e}); \
                 use the hermitize strategy"
            ),
            Error::FitNotConverged { which } => write!(f, "fit did not converge: {which}"),
        }
    }
}

impl core::error::Error for Error {}
