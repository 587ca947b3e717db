//! Optimization of Robin boundary coefficients with P1 finite elements.

// `!(x > 0.0)` is deliberate: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod admissible;
pub mod alpha_limit;
pub mod assembly;
pub mod checks;
pub mod criteria;
pub mod error;
pub mod fields;
pub mod mesh;
pub mod optimize;
pub mod sparse;
pub mod state;
pub mod steklov;

pub use error::{Error, Result};
pub use fields::{BoundaryField, ScalarField};
pub use mesh::Mesh;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(test)]
pub(crate) mod testing;
