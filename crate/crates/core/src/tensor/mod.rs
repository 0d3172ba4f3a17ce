//! Dense matrices, the block-partitioned accelerator layout, and the naive
//! reference kernels used as oracles.

mod blocked;
mod matrix;
mod ops;

pub use blocked::{dbmm, from_blocked, to_blocked, BlockedMatrix, Orientation};
pub(crate) use blocked::validate_dbmm;
pub use matrix::{relative_frobenius_error, relative_max_error, Matrix};
pub use ops::{ewise_ref, gelu, naive_matmul, Activation};
