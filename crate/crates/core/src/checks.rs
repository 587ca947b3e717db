//! Seeded random inputs and finite-difference checks of the adjoint
//! derivatives, shared by tests and the command-line verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admissible::AdmissibleSpec;
use crate::criteria::Problem;
use crate::error::Result;
use crate::fields::BoundaryField;
use crate::mesh::Mesh;

/// Random β with values drawn in [0.05, 0.95], rescaled to mass `v0` and
/// projected if the rescaling leaves the box.
pub fn random_beta(mesh: &Mesh, v0: f64, rng: &mut impl Rng) -> Result<BoundaryField> {
    let raw = BoundaryField::from_fn(mesh, |_| rng.gen_range(0.05..0.95));
    let beta = raw.scaled(v0 / raw.integral(mesh));
    if beta.max() <= 1.0 {
        return Ok(beta);
    }
    AdmissibleSpec::for_mesh(mesh, v0)?.project_field(&beta)
}

/// Random mass-neutral direction with unit weighted norm.
pub fn random_direction(mesh: &Mesh, rng: &mut impl Rng) -> BoundaryField {
    let raw = BoundaryField::from_fn(mesh, |_| rng.gen_range(-1.0..1.0));
    let mean = raw.integral(mesh) / mesh.perimeter();
    let h = raw.map(|v| v - mean);
    let n = h.weighted_norm(mesh);
    h.scaled(1.0 / n)
}

/// Richardson-extrapolated central difference of J along h.
pub fn fd_directional(problem: &Problem<'_>, beta: &BoundaryField, h: &BoundaryField, eps: f64) -> Result<f64> {
    let d = |e: f64| -> Result<f64> {
        Ok((problem.objective(&beta.axpy(e, h))? - problem.objective(&beta.axpy(-e, h))?) / (2.0 * e))
    };
    Ok((4.0 * d(eps / 2.0)? - d(eps)?) / 3.0)
}

/// Central second difference of J along h.
pub fn fd_second(problem: &Problem<'_>, beta: &BoundaryField, h: &BoundaryField, eps: f64) -> Result<f64> {
    let at = |e: f64| problem.objective(&beta.axpy(e, h));
    Ok((at(eps)? - 2.0 * at(0.0)? + at(-eps)?) / (eps * eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub pair: usize,
    pub finite_difference: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

fn relative(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE)
}

/// Compares the adjoint directional derivative with differences on `pairs`
/// seeded (β, h) pairs.
pub fn gradient_check(problem: &Problem<'_>, pairs: usize, seed: u64, eps: f64) -> Result<Vec<DerivativeCheck>> {
    let mesh = problem.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|pair| {
            let beta = random_beta(mesh, problem.spec.v0, &mut rng)?;
            let h = random_direction(mesh, &mut rng);
            let analytic = problem.gradient(&beta)?.directional(mesh, &h);
            let fd = fd_directional(problem, &beta, &h, eps)?;
            Ok(DerivativeCheck {
                pair,
                finite_difference: fd,
                analytic,
                relative_error: relative(fd, analytic),
            })
        })
        .collect()
}

/// Compares J̈(β)[h, h] with second differences on `pairs` seeded pairs.
pub fn second_derivative_check(problem: &Problem<'_>, pairs: usize, seed: u64, eps: f64) -> Result<Vec<DerivativeCheck>> {
    let mesh = problem.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|pair| {
            let beta = random_beta(mesh, problem.spec.v0, &mut rng)?;
            let h = random_direction(mesh, &mut rng);
            let analytic = problem.second_derivative(&beta, &h)?;
            let fd = fd_second(problem, &beta, &h, eps)?;
            Ok(DerivativeCheck {
                pair,
                finite_difference: fd,
                analytic,
                relative_error: relative(fd, analytic),
            })
        })
        .collect()
}

/// Seeded admissible β from independent seeds (used for positivity and
/// coercivity sweeps).
pub fn seeded_betas(mesh: &Mesh, v0: f64, count: usize, seed: u64) -> Result<Vec<BoundaryField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_beta(mesh, v0, &mut rng)).collect()
}
