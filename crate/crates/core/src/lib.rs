//! Variational PAW lab for the one-dimensional periodic double-Dirac operator.

pub mod analytic;
pub mod assembly;
pub mod eigensolve;
pub mod fem;
pub mod error;
pub mod fit;
pub mod jumps;
pub mod linalg;
pub mod local;
pub mod paw;
pub mod quadrature;
pub mod setup;

pub use error::{Error, Result};
