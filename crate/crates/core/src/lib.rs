//! Residual-controlled evaluation of `exp(-tA) v` for large sparse `A`.

pub mod arnoldi;
pub mod chebyshev;
pub mod cli;
pub mod error;
pub mod krylov_richardson;
pub mod linalg;
pub mod ode;
pub mod operator;
pub mod problems;
pub mod sai;
pub mod result;
pub mod richardson;

pub use error::{Error, Result};
