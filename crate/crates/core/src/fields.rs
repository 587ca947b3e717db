//! Nodal and edgewise field containers.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

/// One value per boundary edge, in the mesh's boundary-edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryField(Vec<f64>);

macro_rules! field_impl {
    ($ty:ident, $count:ident, $what:literal) => {
        impl $ty {
            pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
                let expected = mesh.$count();
                if values.len() != expected {
                    return Err(Error::SizeMismatch {
                        what: $what,
                        expected,
                        found: values.len(),
                    });
                }
                Ok(Self(values))
            }

            pub fn constant(mesh: &Mesh, value: f64) -> Self {
                Self(vec![value; mesh.$count()])
            }

            pub fn from_fn(mesh: &Mesh, f: impl FnMut(usize) -> f64) -> Self {
                Self((0..mesh.$count()).map(f).collect())
            }

            /// Checks that the field belongs to `mesh`.
            pub fn check(&self, mesh: &Mesh) -> Result<()> {
                let expected = mesh.$count();
                if self.0.len() != expected {
                    return Err(Error::SizeMismatch {
                        what: $what,
                        expected,
                        found: self.0.len(),
                    });
                }
                Ok(())
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn into_values(self) -> Vec<f64> {
                self.0
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self(self.0.iter().map(|&v| f(v)).collect())
            }

            pub fn scaled(&self, s: f64) -> Self {
                self.map(|v| s * v)
            }

            /// `self + s * other`
            pub fn axpy(&self, s: f64, other: &Self) -> Self {
                Self(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
            }

            pub fn max(&self) -> f64 {
                self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }

            pub fn min(&self) -> f64 {
                self.0.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl Deref for $ty {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $ty {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}

field_impl!(ScalarField, n_vertices, "nodal field");
field_impl!(BoundaryField, n_boundary_edges, "boundary field");

impl ScalarField {
    pub fn from_point_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self(mesh.vertices().iter().map(|&p| f(p)).collect())
    }
}

impl BoundaryField {
    /// Σ_e L_e v_e
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        mesh.boundary_edges()
            .iter()
            .zip(&self.0)
            .map(|(e, v)| e.length * v)
            .sum()
    }

    /// Σ_e L_e a_e b_e
    pub fn weighted_dot(&self, other: &Self, mesh: &Mesh) -> f64 {
        mesh.boundary_edges()
            .iter()
            .zip(self.0.iter().zip(&other.0))
            .map(|(e, (a, b))| e.length * a * b)
            .sum()
    }

    pub fn weighted_norm(&self, mesh: &Mesh) -> f64 {
        self.weighted_dot(self, mesh).sqrt()
    }

    /// Indicator of a set of edges.
    pub fn indicator(mesh: &Mesh, edges: &[usize]) -> Self {
        let mut v = vec![0.0; mesh.n_boundary_edges()];
        for &e in edges {
            v[e] = 1.0;
        }
        Self(v)
    }
}
