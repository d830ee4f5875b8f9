//! Sparse and small-dense kernels shared by every method.

pub mod csr;
pub mod dense;
pub mod eig;
pub mod expm;
pub mod gmres;
pub mod mmio;
pub mod sparse_lu;
pub mod tridiag;
pub mod vector;

pub use csr::CsrMatrix;
pub use dense::{DenseLu, DenseMatrix};
pub use expm::{expm, expm_dense, phi_actions, phi_chain, PhiChain};
pub use gmres::{gmres, GmresOptions, GmresSolution, Ssor};
pub use mmio::{read_matrix_market, read_matrix_market_file, write_matrix_market, write_matrix_market_file};
pub use sparse_lu::{sparse_lu, SparseLu};
pub use tridiag::{lu_solve_tridiagonal, TridiagLu, Tridiagonal};
