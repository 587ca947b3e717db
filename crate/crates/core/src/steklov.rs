//! Robin–Steklov eigenpairs by elimination of the interior unknowns.
//!
//! For A = K + M_∂(β) split into interior (i) and boundary (b) blocks, the
//! boundary problem is S x = σ M_bb x with S = A_bb − A_bi A_ii⁻¹ A_ib and M_bb
//! the boundary mass with unit coefficient. Modes are extended harmonically.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assembly::{self, Operators};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, EnvelopeLdl};

#[derive(Debug, Clone, Serialize)]
pub struct EigPairs {
    /// Ascending eigenvalues.
    pub sigmas: Vec<f64>,
    /// Modes as nodal fields, orthonormal in the boundary pairing.
    #[serde(skip)]
    pub modes: Vec<ScalarField>,
    /// Largest ‖S x − σ M_bb x‖ over the returned pairs, relative to ‖S‖.
    pub max_residual: f64,
    #[serde(skip)]
    boundary_mass: CsrMatrix,
}

impl EigPairs {
    pub fn count(&self) -> usize {
        self.sigmas.len()
    }

    /// ∫_∂Ω a b for nodal fields a, b (exact for P1 traces).
    pub fn pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.boundary_mass.bilinear(a, b)
    }

    /// Largest deviation of the mode Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut err = 0.0f64;
        for (k, a) in self.modes.iter().enumerate() {
            for (l, b) in self.modes.iter().enumerate() {
                let target = if k == l { 1.0 } else { 0.0 };
                err = err.max((self.pairing(a, b) - target).abs());
            }
        }
        err
    }
}

/// Coefficients of boundary data in the eigenbasis.
#[derive(Debug, Clone, Serialize)]
pub struct Expansion {
    pub coefficients: Vec<f64>,
    /// ‖g − Σ α_k φ_k‖ / ‖g‖ on the boundary; zero for g = 0.
    pub relative_residual: f64,
}

/// Sorted boundary and interior vertex lists.
fn split_vertices(mesh: &Mesh) -> (Vec<usize>, Vec<usize>) {
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary_vertex(v) {
            boundary.push(v);
        } else {
            interior.push(v);
        }
    }
    (boundary, interior)
}

/// The `count` smallest Robin–Steklov eigenpairs for coefficient β.
pub fn steklov_eigs(mesh: &Mesh, beta: &BoundaryField, count: usize) -> Result<EigPairs> {
    beta.check(mesh)?;
    let (bnd, int) = split_vertices(mesh);
    let nb = bnd.len();
    if count == 0 || count > nb {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenpairs but there are {nb} boundary vertices"
        )));
    }
    let ops = Operators::new(mesh);
    let a = ops.robin_matrix(mesh, beta);
    let mut s = a.submatrix(&bnd, &bnd).to_dense();
    let a_ib = a.submatrix(&int, &bnd);
    let a_ii_factor = if int.is_empty() {
        None
    } else {
        let f = EnvelopeLdl::factor(&a.submatrix(&int, &int))
            .map_err(|e| Error::Singular(format!("interior block factorization failed: {e}")))?;
        if !f.is_positive_definite() {
            return Err(Error::Singular("interior block is not positive definite".into()));
        }
        Some(f)
    };
    // Columns of A_ii⁻¹ A_ib, kept for the harmonic extension.
    let mut ext = DMatrix::<f64>::zeros(int.len(), nb);
    if let Some(f) = &a_ii_factor {
        let dense_ib = a_ib.to_dense();
        for c in 0..nb {
            let col: Vec<f64> = dense_ib.column(c).iter().copied().collect();
            let x = f.solve(&col);
            ext.set_column(c, &DVector::from_vec(x));
        }
        s -= dense_ib.transpose() * &ext;
    }
    let s = (&s + s.transpose()) * 0.5;
    let full_mass = assembly::boundary_mass(mesh, &BoundaryField::constant(mesh, 1.0))?;
    let m_bb = full_mass.submatrix(&bnd, &bnd).to_dense();
    let l = m_bb
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("boundary mass is not positive definite".into()))?
        .l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("boundary mass factor is singular".into()))?;
    let c = &l_inv * &s * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let s_norm = s.norm().max(f64::MIN_POSITIVE);
    let mut sigmas = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    let mut max_residual = 0.0f64;
    for &k in order.iter().take(count) {
        let sigma = eig.eigenvalues[k];
        let mut x = l_inv.transpose() * eig.eigenvectors.column(k);
        let pivot = x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            x.neg_mut();
        }
        let r = &s * &x - (&m_bb * &x) * sigma;
        max_residual = max_residual.max(r.norm() / s_norm);
        let mut mode = vec![0.0; mesh.n_vertices()];
        for (i, &v) in bnd.iter().enumerate() {
            mode[v] = x[i];
        }
        if !int.is_empty() {
            let xi = &ext * &x;
            for (i, &v) in int.iter().enumerate() {
                mode[v] = -xi[i];
            }
        }
        sigmas.push(sigma);
        modes.push(ScalarField::from_vec_unchecked(mode));
    }
    Ok(EigPairs {
        sigmas,
        modes,
        max_residual,
        boundary_mass: full_mass,
    })
}

/// α_k = ∫_∂Ω g φ_k for a nodal trace g.
pub fn expand_trace(eigs: &EigPairs, g: &[f64]) -> Expansion {
    let coefficients: Vec<f64> = eigs.modes.iter().map(|m| eigs.pairing(g, m)).collect();
    let mut rest = g.to_vec();
    for (a, m) in coefficients.iter().zip(&eigs.modes) {
        for (r, v) in rest.iter_mut().zip(m.iter()) {
            *r -= a * v;
        }
    }
    let gg = eigs.pairing(g, g);
    let relative_residual = if gg > 0.0 {
        (eigs.pairing(&rest, &rest).max(0.0) / gg).sqrt()
    } else {
        0.0
    };
    Expansion {
        coefficients,
        relative_residual,
    }
}

/// α_k = φ_k · b for a load vector b_i = ∫_∂Ω g φ_i, e.g. b = −M_∂(h)u.
pub fn expand_load(eigs: &EigPairs, load: &[f64]) -> Vec<f64> {
    eigs.modes
        .iter()
        .map(|m| m.iter().zip(load).map(|(a, b)| a * b).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{Problem, ProblemSpec, Sense};
    use crate::testing::{random_beta, random_direction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disk_spectrum_pattern() {
        let mesh = Mesh::disk(128, 24).unwrap();
        for beta_bar in [0.5, 1.0] {
            let eigs = steklov_eigs(&mesh, &BoundaryField::constant(&mesh, beta_bar), 7).unwrap();
            let expected = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0].map(|k| beta_bar + k);
            for (s, e) in eigs.sigmas.iter().zip(expected) {
                assert!((s - e).abs() < 3e-2, "{s} vs {e}");
            }
            assert!(eigs.orthonormality_error() < 1e-8);
            assert!(eigs.max_residual < 1e-10);
        }
    }

    #[test]
    fn first_mode_constant_for_unit_beta() {
        let mesh = Mesh::disk(64, 12).unwrap();
        let eigs = steklov_eigs(&mesh, &BoundaryField::constant(&mesh, 1.0), 1).unwrap();
        // Constants are exact eigenfunctions with σ = β.
        assert!((eigs.sigmas[0] - 1.0).abs() < 1e-10);
        let m = &eigs.modes[0];
        assert!(m.iter().all(|v| (v - m[0]).abs() < 1e-9));
        assert!(m[0] > 0.0);
    }

    #[test]
    fn modes_are_discretely_harmonic() {
        let mesh = Mesh::square(6).unwrap();
        let beta = BoundaryField::from_fn(&mesh, |e| if e % 2 == 0 { 0.8 } else { 0.1 });
        let eigs = steklov_eigs(&mesh, &beta, 5).unwrap();
        let a = Operators::new(&mesh).robin_matrix(&mesh, &beta);
        for m in &eigs.modes {
            let am = a.mul_vec(m);
            for v in 0..mesh.n_vertices() {
                if !mesh.is_boundary_vertex(v) {
                    assert!(am[v].abs() < 1e-10);
                }
            }
        }
        assert!(eigs.sigmas.windows(2).all(|w| w[0] <= w[1]));
        assert!(eigs.sigmas[0] > 0.0);
    }

    #[test]
    fn too_many_modes_rejected() {
        let mesh = Mesh::square(2).unwrap();
        assert!(steklov_eigs(&mesh, &BoundaryField::constant(&mesh, 1.0), 9).is_err());
    }

    #[test]
    fn expansion_of_modes_and_zero() {
        let mesh = Mesh::disk(32, 6).unwrap();
        let eigs = steklov_eigs(&mesh, &BoundaryField::constant(&mesh, 0.5), 6).unwrap();
        let e0 = expand_trace(&eigs, &eigs.modes[0]);
        assert!((e0.coefficients[0] - 1.0).abs() < 1e-8);
        assert!(e0.coefficients[1..].iter().all(|c| c.abs() < 1e-8));
        assert!(e0.relative_residual < 1e-6);
        let z = expand_trace(&eigs, &vec![0.0; mesh.n_vertices()]);
        assert!(z.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn sensitivity_coefficients_and_spectral_sum() {
        let mesh = Mesh::square(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = ProblemSpec::compliance(Sense::Minimize, ScalarField::constant(&mesh, 1.0), 1.2);
        let problem = Problem::new(&mesh, &spec).unwrap();
        let beta = random_beta(&mesh, spec.v0, &mut rng);
        let h = random_direction(&mesh, &mut rng);
        let nb = mesh.boundary_vertices().len();
        let eigs = steklov_eigs(&mesh, &beta, nb).unwrap();
        let st = problem.solve_state(&beta).unwrap();
        let udot = problem.sensitivity(&st, &h).unwrap();
        let load: Vec<f64> = assembly::boundary_mass(&mesh, &h)
            .unwrap()
            .mul_vec(&st.u)
            .iter()
            .map(|v| -v)
            .collect();
        let alpha = expand_load(&eigs, &load);
        let c = expand_trace(&eigs, &udot).coefficients;
        for k in 0..nb {
            let target = alpha[k] / eigs.sigmas[k];
            assert!((c[k] - target).abs() <= 1e-6 * target.abs().max(1e-8));
        }
        let spectral: f64 = 2.0 * alpha.iter().zip(&eigs.sigmas).map(|(a, s)| a * a / s).sum::<f64>();
        let direct = problem.second_derivative(&beta, &h).unwrap();
        assert!((spectral - direct).abs() <= 1e-6 * direct.abs());
    }

    #[test]
    fn min_max_monotonicity() {
        let mesh = Mesh::disk(32, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let full = steklov_eigs(&mesh, &BoundaryField::constant(&mesh, 1.0), 4).unwrap();
        for _ in 0..5 {
            let beta = random_beta(&mesh, 0.5 * mesh.perimeter(), &mut rng);
            let e = steklov_eigs(&mesh, &beta, 4).unwrap();
            for k in 0..4 {
                assert!(e.sigmas[k] <= full.sigmas[k] + 1e-12);
            }
        }
    }
}
