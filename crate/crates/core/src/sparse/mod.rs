//! Sparse storage, kernels and inner linear solves.

mod csr;
pub mod mm;
mod solve;
mod vector;

pub use csr::{add_scaled, extract_diagonal, spmv, triple_product_diag, CsrMatrix};
pub use solve::{
    inner_solve, reverse_cuthill_mckee, LinearSolver, SolverOptions, BACKWARD_TOL,
    DEFAULT_INNER_MAX_IT, DEFAULT_INNER_TOL, RESIDUAL_FLOOR,
};
pub(crate) use vector::check_len;
pub use vector::{axpy, dot, norm2, scale, DenseVector};
