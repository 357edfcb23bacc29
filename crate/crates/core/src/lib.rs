//! Cellwise robust discriminant analysis.
//!
//! This crate holds the numerical core: subset Gaussian kernels, the cellMCD
//! estimator of class centers and scatters, the greedy cell flagger, the
//! Bernoulli/Laplace contamination model and the robust discriminant rule
//! built on top of them. It is `no_std` and only needs an allocator; file
//! formats, the simulation harness and the command-line tool live in the
//! `cellda` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cellmcd;
pub mod classifier;
pub mod contamination;
pub mod diagnostics;
pub mod error;
pub mod flagger;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod special;

pub use cellmcd::{CellMcdConfig, CellMcdFit};
pub use classifier::{ClassicalModel, PredictionResult};
pub use error::{Error, Result};
pub use flagger::FlagTrace;
pub use linalg::Matrix;
pub use model::{
    ClassModel, DaConfig, DataSet, DiscriminantModel, FitReport, FlagMatrix, FlagVector, Labels,
    Mode, Standardizer,
};
