use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input shapes disagree.
    Dimension(String),
    /// Labels were required but the data set has none.
    MissingLabels,
    /// A class has no training rows.
    EmptyClass(usize),
    /// Fewer than two classes.
    TooFewClasses(usize),
    /// A class has too few rows to estimate its scatter.
    ClassTooSmall { class: usize, rows: usize },
    /// A column has zero robust scale.
    ConstantColumn(String),
    /// A matrix that must be symmetric positive definite is not.
    NotPositiveDefinite,
    /// An index set that must be non-empty is empty.
    EmptySubset,
    /// A probability or other argument is out of its domain.
    Domain(String),
    /// Classical methods cannot handle missing cells.
    MissingValues,
    /// An iterative routine failed to converge.
    NoConvergence(&'static str),
}

impl Error {
    /// Whether the error comes from numerical failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite | Error::NoConvergence(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::MissingLabels => write!(f, "class labels are required"),
            Error::EmptyClass(g) => write!(f, "empty class {g}"),
            Error::TooFewClasses(g) => write!(f, "at least two classes are required, got {g}"),
            Error::ClassTooSmall { class, rows } => {
                write!(f, "class too small: class {class} has {rows} usable rows")
            }
            Error::ConstantColumn(name) => {
                write!(f, "column `{name}` has zero robust scale (constant column)")
            }
            Error::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            Error::EmptySubset => write!(f, "index set is empty"),
            Error::Domain(msg) => write!(f, "argument out of domain: {msg}"),
            Error::MissingValues => write!(f, "missing values are not supported by classical methods"),
            Error::NoConvergence(what) => write!(f, "{what} did not converge"),
        }
    }
}

impl core::error::Error for Error {}
