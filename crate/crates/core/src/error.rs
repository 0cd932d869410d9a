use core::fmt;

/// Errors raised by the scheduling and estimation routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Multi-choice accuracy at or below random guessing (`1/R`).
    UnusableWorker { accuracy: f64, choices: usize },
    EmptyWorkerSet,
    /// Majority voting over an even number of workers was requested in odd-only mode.
    EvenSetNotComparable { size: usize },
    BadChoiceCount(usize),
    BadPrior,
    BadAccuracy(f64),
    EmptyTest,
    EmptyCohort,
    /// All qualification test difficulties are zero.
    DegenerateWeights,
    NoHistory,
    NoAssignees,
    BadCategoryStats(f64),
    LengthMismatch { expected: usize, found: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnusableWorker { accuracy, choices } => write!(
                f,
                "accuracy {accuracy} is not better than guessing among {choices} choices"
            ),
            Error::EmptyWorkerSet => f.write_str("worker set is empty"),
            Error::EvenSetNotComparable { size } => {
                write!(f, "majority accuracy is only defined for odd sets, got {size} workers")
            }
            Error::BadChoiceCount(r) => write!(f, "choice count must be at least 2, got {r}"),
            Error::BadPrior => f.write_str("priors must be finite, non-negative and not all zero"),
            Error::BadAccuracy(a) => write!(f, "accuracy {a} is out of range"),
            Error::EmptyTest => f.write_str("qualification test has no tasks"),
            Error::EmptyCohort => f.write_str("worker cohort is empty"),
            Error::DegenerateWeights => f.write_str("all test difficulties are zero"),
            Error::NoHistory => f.write_str("no response-time history"),
            Error::NoAssignees => f.write_str("task has no assigned workers"),
            Error::BadCategoryStats(r) => {
                write!(f, "category mean response time must be positive, got {r}")
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
