//! Dense linear algebra used by the solvers and diagnostics.

mod factor;
mod matrix;
mod svd;
mod symeig;

pub use factor::{Cholesky, Qr};
pub use matrix::Matrix;
pub use svd::{singular_values, Svd};
pub use symeig::SymEigen;
