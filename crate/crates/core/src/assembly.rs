//! P1 finite-element assembly on triangle meshes.

use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// How `load_vector` treats sources that violate `f >= 0, f != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourcePolicy {
    /// Reject negative or identically zero sources.
    #[default]
    Strict,
    /// Accept any source and log a warning.
    Lenient,
}

/// Gradients of the three barycentric hat functions on triangle `t`, and its area.
fn hat_gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
    let area = mesh.triangle_area(t);
    let inv = 1.0 / (2.0 * area);
    let g = [
        [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
        [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
        [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
    ];
    (g, area)
}

/// Gradient of the P1 interpolant of `u` on triangle `t`.
pub fn triangle_gradient(mesh: &Mesh, t: usize, u: &[f64]) -> [f64; 2] {
    let (g, _) = hat_gradients(mesh, t);
    let tri = mesh.triangles()[t];
    let mut out = [0.0; 2];
    for a in 0..3 {
        out[0] += u[tri[a]] * g[a][0];
        out[1] += u[tri[a]] * g[a][1];
    }
    out
}

/// K_ij = ∫ ∇φ_i · ∇φ_j
pub fn stiffness(mesh: &Mesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.triangles().len());
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = hat_gradients(mesh, ti);
        for a in 0..3 {
            for b in 0..3 {
                let v = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                t.push((tri[a], tri[b], v));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, &t)
}

/// Consistent mass matrix M_ij = ∫ φ_i φ_j.
pub fn domain_mass(mesh: &Mesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.triangles().len());
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(ti);
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                t.push((tri[a], tri[b], w));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, &t)
}

/// M_∂(β)_ij = ∫_∂Ω β φ_i φ_j with β constant on each boundary edge.
pub fn boundary_mass(mesh: &Mesh, beta: &BoundaryField) -> Result<CsrMatrix> {
    beta.check(mesh)?;
    Ok(boundary_mass_unchecked(mesh, beta))
}

pub(crate) fn boundary_mass_unchecked(mesh: &Mesh, beta: &[f64]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * beta.len());
    for (e, &b) in mesh.boundary_edges().iter().zip(beta) {
        if b == 0.0 {
            continue;
        }
        let [i, j] = e.vertices;
        let d = b * e.length / 3.0;
        let o = b * e.length / 6.0;
        t.extend([(i, i, d), (j, j, d), (i, j, o), (j, i, o)]);
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, &t)
}

/// F = M f for a nodal source f.
pub fn load_vector(mesh: &Mesh, f: &ScalarField, policy: SourcePolicy) -> Result<Vec<f64>> {
    f.check(mesh)?;
    let negative = f.iter().any(|&v| v < 0.0);
    let vanishing = f.iter().all(|&v| v == 0.0);
    if negative || vanishing {
        let what = if negative { "negative values" } else { "vanishes identically" };
        match policy {
            SourcePolicy::Strict => {
                return Err(Error::Hypothesis(format!(
                    "source must be nonnegative and not identically zero; it has {what}"
                )))
            }
            SourcePolicy::Lenient => log::warn!("source {what}"),
        }
    }
    Ok(domain_mass(mesh).mul_vec(f))
}

/// Lumped nodal weights w = M 1 (each vertex gets a third of its triangles' area).
pub fn lumped_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_vertices()];
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(ti) / 3.0;
        for &v in tri {
            w[v] += a;
        }
    }
    w
}

/// Trapezoid weights on the boundary: half the length of each adjacent edge.
pub fn boundary_weights(mesh: &Mesh) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    for e in mesh.boundary_edges() {
        for &v in &e.vertices {
            b[v] += 0.5 * e.length;
        }
    }
    b
}

/// b_i = ∫_∂Ω g φ_i for an edgewise-constant g.
pub fn boundary_load(mesh: &Mesh, g: &BoundaryField) -> Result<Vec<f64>> {
    g.check(mesh)?;
    let mut b = vec![0.0; mesh.n_vertices()];
    for (e, &gv) in mesh.boundary_edges().iter().zip(g.iter()) {
        for &v in &e.vertices {
            b[v] += 0.5 * e.length * gv;
        }
    }
    Ok(b)
}

/// Mean over each boundary edge of the product of two P1 traces, integrated exactly.
pub fn edge_product_mean(mesh: &Mesh, u: &[f64], p: &[f64]) -> Vec<f64> {
    mesh.boundary_edges()
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            (u[a] * p[a] + u[b] * p[b]) / 3.0 + (u[a] * p[b] + u[b] * p[a]) / 6.0
        })
        .collect()
}

/// Trapezoid mean of a nodal field over each boundary edge.
pub fn edge_mean(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    mesh.boundary_edges()
        .iter()
        .map(|e| 0.5 * (u[e.vertices[0]] + u[e.vertices[1]]))
        .collect()
}

/// Assembled mesh operators that do not depend on β.
#[derive(Debug, Clone)]
pub struct Operators {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Lumped nodal weights `M 1`.
    pub weights: Vec<f64>,
    /// Boundary trapezoid weights.
    pub boundary_weights: Vec<f64>,
}

impl Operators {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            stiffness: stiffness(mesh),
            mass: domain_mass(mesh),
            weights: lumped_weights(mesh),
            boundary_weights: boundary_weights(mesh),
        }
    }

    /// K + M_∂(β)
    pub fn robin_matrix(&self, mesh: &Mesh, beta: &[f64]) -> CsrMatrix {
        self.stiffness.add_scaled(&boundary_mass_unchecked(mesh, beta), 1.0)
    }
}
