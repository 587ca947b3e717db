//! Shared helpers for unit tests.

use rand::Rng;

use crate::fields::BoundaryField;
use crate::mesh::Mesh;

pub use crate::checks::random_direction;

/// Random admissible β kept inside the box for moderate v0.
pub fn random_beta(mesh: &Mesh, v0: f64, rng: &mut impl Rng) -> BoundaryField {
    crate::checks::random_beta(mesh, v0, rng).unwrap()
}
