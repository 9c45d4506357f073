//! Block splitting schemes for coupled 2×2 block linear systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`sparse`]: CSR storage, kernels, Matrix Market I/O and inner solves.
//! * [`block`]: the 2×2 block system and its monolithic reference solve.
//! * [`schemes`]: block-Jacobi/Gauss-Seidel/SOR, relaxed iterations and the
//!   partial-Jacobi approximate-Schur relaxations.
//! * [`analysis`]: norm and coercivity estimators and convergence conditions.
//! * [`mms`]: manufactured-solution finite-volume problems.
//! * [`experiment`]: sweeps and refinement studies used by the CLI.

pub mod analysis;
pub mod block;
pub mod error;
pub mod experiment;
pub mod mms;
pub mod schemes;
pub mod sparse;

pub use analysis::{AnalysisReport, ConditionRecord, EstimatorOptions, Splitting};
pub use block::{BlockSystem, BlockVector};
pub use error::{Error, Result};
pub use mms::{Dim, ManufacturedProblem, Model};
pub use schemes::{
    build_relaxation, run, IterationReport, Ordering, RelaxationOperator, SchemeKind, SchemeSpec,
    SchurForm, Side, Status, Stepper,
};
pub use sparse::{CsrMatrix, DenseVector};
