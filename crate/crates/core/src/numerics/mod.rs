//! Dense linear algebra, deterministic randomness and a finite-difference
//! gradient oracle.

mod eigen;
mod gradcheck;
mod mat;
mod prng;

pub use eigen::symmetric_eigen3;
pub use gradcheck::{finite_diff_grad, relative_error, DEFAULT_FD_STEP};
pub use mat::{dot, gemm, gemm_nt, l2_normalize_rows, norm2, Mat, DEFAULT_NORM_EPS};
pub use prng::Prng;
