//! Block-sparse linear algebra: the bordered block matrix, per-row
//! decoupling, restarted GMRES and the CPR-FPF preconditioner.

pub mod block;
pub mod cpr;
pub mod decouple;
pub mod dump;
pub mod gmres;
pub mod ilu;
pub mod vecops;

pub use block::{BlockMatrix, Partitioning, BLOCK};
pub use cpr::{CprConfig, CprFpf, IluPrecond, PressureSolver};
pub use decouple::{decouple_in_place, diag_identity_error, invert4};
pub use gmres::{gmres, GmresConfig, GmresResult, IdentityPrecond, LinOp, Precond};
pub use ilu::{Ilu0, ScalarCsr};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("singular diagonal block at cell {cell}")]
    SingularDiagonal { cell: usize },
    #[error("singular well equation row for well {well}")]
    SingularWellRow { well: usize },
    #[error("zero pivot in ILU(0) at row {row} after diagonal shift")]
    ZeroPivot { row: usize },
    #[error("pressure set must be a non-empty sorted subset of the cell unknowns")]
    InvalidPressureSet,
    #[error("linear solver failed to converge: {0}")]
    NotConverged(String),
}
