//! File formats, simulation harness and command-line plumbing for cellwise
//! robust discriminant analysis. The numerical work lives in `cellda-core`.

pub mod crossval;
pub mod error;
pub mod io;
pub mod sim;
pub mod svg;

pub use error::{CliError, Result};
