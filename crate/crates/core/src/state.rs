//! State equations: Robin, Dirichlet, mixed, boundary-source Robin and logistic.

use serde::{Deserialize, Serialize};

use crate::assembly::{self, Operators, SourcePolicy};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::{dot, norm, CsrMatrix, SolverKind, SymmetricSolver};

/// The factored operator K + M_∂(β).
#[derive(Debug, Clone)]
pub struct RobinOperator {
    solver: SymmetricSolver,
}

impl RobinOperator {
    /// Requires β ≥ 0 edgewise with positive boundary mass; the β box is not
    /// enforced so penalized coefficients are accepted too.
    pub fn new(mesh: &Mesh, ops: &Operators, beta: &BoundaryField, kind: SolverKind) -> Result<Self> {
        beta.check(mesh)?;
        if let Some(e) = beta.iter().position(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Robin coefficient on edge {e} is {} (must be finite and nonnegative)",
                beta[e]
            )));
        }
        if beta.integral(mesh) <= 0.0 {
            return Err(Error::Hypothesis(
                "Robin coefficient has zero boundary mass; the pure Neumann problem is singular".into(),
            ));
        }
        let solver = SymmetricSolver::spd(ops.robin_matrix(mesh, beta), kind)?;
        Ok(Self { solver })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.solver.matrix()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(rhs)
    }

    pub fn into_solver(self) -> SymmetricSolver {
        self.solver
    }
}

/// Solves −Δu = f, ∂_ν u + βu = 0.
pub fn solve_robin(mesh: &Mesh, beta: &BoundaryField, f: &ScalarField) -> Result<ScalarField> {
    let ops = Operators::new(mesh);
    let load = assembly::load_vector(mesh, f, SourcePolicy::Strict)?;
    let op = RobinOperator::new(mesh, &ops, beta, SolverKind::Direct)?;
    Ok(ScalarField::from_vec_unchecked(op.solve(&load)?))
}

/// Solves −Δz = 0, ∂_ν z + βz = g with g constant per boundary edge.
pub fn solve_robin_boundary_source(
    mesh: &Mesh,
    beta: &BoundaryField,
    g: &BoundaryField,
) -> Result<ScalarField> {
    let ops = Operators::new(mesh);
    let rhs = assembly::boundary_load(mesh, g)?;
    let op = RobinOperator::new(mesh, &ops, beta, SolverKind::Direct)?;
    Ok(ScalarField::from_vec_unchecked(op.solve(&rhs)?))
}

/// Solves K_FF v_F = F_F with v = 0 on the complement of `free`.
fn solve_constrained(ops: &Operators, load: &[f64], free: &[usize], kind: SolverKind) -> Result<Vec<f64>> {
    let n = load.len();
    let mut v = vec![0.0; n];
    if free.is_empty() {
        return Ok(v);
    }
    let kff = ops.stiffness.submatrix(free, free);
    let rhs: Vec<f64> = free.iter().map(|&i| load[i]).collect();
    let x = SymmetricSolver::spd(kff, kind)?.solve(&rhs)?;
    for (&i, xi) in free.iter().zip(x) {
        v[i] = xi;
    }
    Ok(v)
}

/// Homogeneous Dirichlet solution and its recovered outward normal derivative.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub v: ScalarField,
    /// ∂_ν v per boundary edge, from the boundary residual K v − F.
    pub flux: BoundaryField,
}

pub fn solve_dirichlet(mesh: &Mesh, f: &ScalarField) -> Result<DirichletSolution> {
    solve_dirichlet_with(mesh, f, SourcePolicy::Strict)
}

pub fn solve_dirichlet_with(mesh: &Mesh, f: &ScalarField, policy: SourcePolicy) -> Result<DirichletSolution> {
    let ops = Operators::new(mesh);
    let load = assembly::load_vector(mesh, f, policy)?;
    let free: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| !mesh.is_boundary_vertex(v)).collect();
    let v = solve_constrained(&ops, &load, &free, SolverKind::Direct)?;
    let kv = ops.stiffness.mul_vec(&v);
    let flux = mesh
        .boundary_edges()
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            0.5 * ((kv[a] - load[a]) + (kv[b] - load[b])) / e.length
        })
        .collect();
    Ok(DirichletSolution {
        v: ScalarField::from_vec_unchecked(v),
        flux: BoundaryField::from_vec_unchecked(flux),
    })
}

/// Solves −Δv = f with v = 0 on the edges `gamma` and ∂_ν v = 0 elsewhere.
pub fn solve_mixed(mesh: &Mesh, gamma: &[usize], f: &ScalarField) -> Result<ScalarField> {
    if gamma.is_empty() {
        return Err(Error::InvalidParameter(
            "the Dirichlet part of the boundary must be nonempty".into(),
        ));
    }
    let edges = mesh.boundary_edges();
    let mut fixed = vec![false; mesh.n_vertices()];
    for &e in gamma {
        let edge = edges.get(e).ok_or_else(|| {
            Error::InvalidParameter(format!("boundary edge {e} out of range ({} edges)", edges.len()))
        })?;
        for &v in &edge.vertices {
            fixed[v] = true;
        }
    }
    let ops = Operators::new(mesh);
    let load = assembly::load_vector(mesh, f, SourcePolicy::Strict)?;
    let free: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| !fixed[v]).collect();
    Ok(ScalarField::from_vec_unchecked(solve_constrained(
        &ops,
        &load,
        &free,
        SolverKind::Direct,
    )?))
}

/// Resource density and Newton controls for −Δy = y(m − y), ∂_ν y + βy = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticData {
    pub m: ScalarField,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl LogisticData {
    pub fn new(m: ScalarField) -> Self {
        Self {
            m,
            newton_tol: 1e-10,
            max_newton: 50,
        }
    }

    /// ∫_Ω m with the lumped weights.
    pub fn total_resource(&self, ops: &Operators) -> f64 {
        dot(&ops.weights, &self.m)
    }
}

const MAX_HALVINGS: usize = 30;

/// Residual A y − w∘y∘(m − y).
fn logistic_residual(a: &CsrMatrix, w: &[f64], m: &[f64], y: &[f64]) -> Vec<f64> {
    let mut r = a.mul_vec(y);
    for i in 0..y.len() {
        r[i] -= w[i] * y[i] * (m[i] - y[i]);
    }
    r
}

/// A − diag(w∘(m − 2y)), the Jacobian of the logistic residual.
pub fn logistic_jacobian(a: &CsrMatrix, w: &[f64], m: &[f64], y: &[f64]) -> CsrMatrix {
    let d: Vec<f64> = (0..y.len()).map(|i| -w[i] * (m[i] - 2.0 * y[i])).collect();
    a.add_diagonal(&d)
}

#[derive(Debug, Clone)]
pub struct LogisticState {
    pub y: ScalarField,
    pub newton_iterations: usize,
    pub residual: f64,
}

pub fn solve_logistic(mesh: &Mesh, beta: &BoundaryField, data: &LogisticData) -> Result<ScalarField> {
    let ops = Operators::new(mesh);
    solve_logistic_with(mesh, &ops, beta, data).map(|s| s.y)
}

/// Damped Newton from y⁰ = max(m, 1e-6 max m).
pub fn solve_logistic_with(
    mesh: &Mesh,
    ops: &Operators,
    beta: &BoundaryField,
    data: &LogisticData,
) -> Result<LogisticState> {
    beta.check(mesh)?;
    data.m.check(mesh)?;
    let m: &[f64] = &data.m;
    let m_max = data.m.max();
    if !(m_max > 0.0) {
        return Err(Error::Hypothesis("resource density m must be positive somewhere".into()));
    }
    let v0 = beta.integral(mesh);
    let total = data.total_resource(ops);
    if !(total > v0) {
        return Err(Error::Hypothesis(format!(
            "the total resource {total} must exceed the boundary mass {v0}"
        )));
    }
    let a = ops.robin_matrix(mesh, beta);
    let w = &ops.weights;
    let floor = 1e-6 * m_max;
    let mut y: Vec<f64> = m.iter().map(|&v| v.max(floor)).collect();
    let mut r = logistic_residual(&a, w, m, &y);
    let mut rnorm = norm(&r);
    let mut iterations = 0;
    while rnorm > data.newton_tol {
        if iterations == data.max_newton {
            return Err(Error::NotConverged {
                what: "logistic Newton iteration",
                iterations,
                residual: rnorm,
            });
        }
        iterations += 1;
        let jac = logistic_jacobian(&a, w, m, &y);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = SymmetricSolver::symmetric(jac)?.solve(&neg_r)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(y, d)| y + t * d).collect();
            let tr = logistic_residual(&a, w, m, &trial);
            let tn = norm(&tr);
            if tn < rnorm {
                accepted = Some((trial, tr, tn));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, tr, tn)) = accepted else {
            return Err(Error::NotConverged {
                what: "logistic Newton line search",
                iterations,
                residual: rnorm,
            });
        };
        y = trial;
        r = tr;
        rnorm = tn;
    }
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y_max <= 1e-8 * m_max {
        return Err(Error::TrivialBranch);
    }
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if y_min < -1e-8 * y_max {
        return Err(Error::Degenerate(format!(
            "logistic iteration converged to a sign-changing state (min {y_min:e})"
        )));
    }
    Ok(LogisticState {
        y: ScalarField::from_vec_unchecked(y),
        newton_iterations: iterations,
        residual: rnorm,
    })
}

/// Smallest eigenvalue μ of (K + M_∂(β) − diag(w∘(m − 2y))) x = μ M x.
pub fn stability_eigenvalue(mesh: &Mesh, beta: &BoundaryField, y: &ScalarField, data: &LogisticData) -> Result<f64> {
    let ops = Operators::new(mesh);
    beta.check(mesh)?;
    y.check(mesh)?;
    data.m.check(mesh)?;
    let a = ops.robin_matrix(mesh, beta);
    let jac = logistic_jacobian(&a, &ops.weights, &data.m, y);
    smallest_pencil_eigenvalue(&jac, &ops.mass, growth_bound(&data.m, y))
}

/// Upper bound for max(m − 2y)₊ used to shift the pencil.
fn growth_bound(m: &[f64], y: &[f64]) -> f64 {
    m.iter().zip(y).map(|(m, y)| m - 2.0 * y).fold(0.0f64, f64::max)
}

/// Shifted inverse iteration for the smallest eigenvalue of A x = μ M x, where
/// A + 4·w_max·M is known to be positive definite (the P1 mass matrix dominates a
/// quarter of its lumped diagonal).
pub fn smallest_pencil_eigenvalue(a: &CsrMatrix, m: &CsrMatrix, w_max: f64) -> Result<f64> {
    let n = a.dim();
    let scale = a.diagonal().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let shift = 4.0 * w_max + 1e-8 * scale.max(1.0);
    let shifted = SymmetricSolver::spd(a.add_scaled(m, shift), SolverKind::Direct)?;
    let mut x = vec![1.0; n];
    let mut mu_prev = f64::INFINITY;
    const MAX_ITER: usize = 2000;
    for it in 0..MAX_ITER {
        let mx = m.mul_vec(&x);
        let mut z = shifted.solve(&mx)?;
        let zn = m.bilinear(&z, &z).sqrt();
        z.iter_mut().for_each(|v| *v /= zn);
        let az = a.mul_vec(&z);
        let mu = dot(&z, &az);
        let mz = m.mul_vec(&z);
        let res: Vec<f64> = az.iter().zip(&mz).map(|(p, q)| p - mu * q).collect();
        let rel = norm(&res) / norm(&az).max(f64::MIN_POSITIVE);
        x = z;
        if rel < 1e-9 || ((mu - mu_prev).abs() <= 1e-14 * mu.abs().max(1.0) && it > 2) {
            return Ok(mu);
        }
        mu_prev = mu;
    }
    Err(Error::NotConverged {
        what: "inverse iteration",
        iterations: MAX_ITER,
        residual: (mu_prev).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn radial_u(r: f64, beta: f64) -> f64 {
        (1.0 - r * r) / 4.0 + 1.0 / (2.0 * beta)
    }

    fn one(mesh: &Mesh) -> ScalarField {
        ScalarField::constant(mesh, 1.0)
    }

    /// Smallest eigenvalue of the dense pencil via Cholesky of M.
    fn dense_pencil_min(a: &CsrMatrix, m: &CsrMatrix) -> f64 {
        let l = m.to_dense().cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let c: DMatrix<f64> = &li * a.to_dense() * li.transpose();
        let c = (&c + c.transpose()) * 0.5;
        c.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn robin_disk_radial_values() {
        let mesh = Mesh::disk(128, 24).unwrap();
        for beta in [1.0, 0.5] {
            let u = solve_robin(&mesh, &BoundaryField::constant(&mesh, beta), &one(&mesh)).unwrap();
            assert!((u[0] - radial_u(0.0, beta)).abs() < 5e-3, "center {}", u[0]);
            for &v in mesh.boundary_vertices() {
                assert!((u[v] - radial_u(1.0, beta)).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn robin_is_linear_in_source() {
        let mesh = Mesh::square(6).unwrap();
        let beta = BoundaryField::from_fn(&mesh, |e| if e % 3 == 0 { 1.0 } else { 0.2 });
        let f1 = ScalarField::from_point_fn(&mesh, |p| 1.0 + p[0]);
        let f2 = ScalarField::from_point_fn(&mesh, |p| p[1] * p[1]);
        let u1 = solve_robin(&mesh, &beta, &f1).unwrap();
        let u2 = solve_robin(&mesh, &beta, &f2).unwrap();
        let u12 = solve_robin(&mesh, &beta, &f1.axpy(1.0, &f2)).unwrap();
        let u_double = solve_robin(&mesh, &beta, &f1.scaled(2.0)).unwrap();
        for i in 0..mesh.n_vertices() {
            assert!((u12[i] - u1[i] - u2[i]).abs() < 1e-10);
            assert!((u_double[i] - 2.0 * u1[i]).abs() < 1e-12);
            assert!(u1[i] > 0.0);
        }
    }

    #[test]
    fn zero_beta_is_rejected() {
        let mesh = Mesh::square(3).unwrap();
        let r = solve_robin(&mesh, &BoundaryField::constant(&mesh, 0.0), &one(&mesh));
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn pcg_backend_agrees_with_direct() {
        let mesh = Mesh::disk(40, 8).unwrap();
        let ops = Operators::new(&mesh);
        let beta = BoundaryField::from_fn(&mesh, |e| (e % 2) as f64);
        let f = assembly::load_vector(&mesh, &one(&mesh), SourcePolicy::Strict).unwrap();
        let d = RobinOperator::new(&mesh, &ops, &beta, SolverKind::Direct).unwrap().solve(&f).unwrap();
        let c = RobinOperator::new(&mesh, &ops, &beta, SolverKind::Pcg { tol: 1e-12 })
            .unwrap()
            .solve(&f)
            .unwrap();
        assert!(d.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn dirichlet_disk_and_flux() {
        let mesh = Mesh::disk(128, 24).unwrap();
        let sol = solve_dirichlet(&mesh, &one(&mesh)).unwrap();
        assert!((sol.v[0] - 0.25).abs() < 2e-3);
        for &q in sol.flux.iter() {
            assert!(q < 0.0, "Hopf sign");
            assert!((q + 0.5).abs() < 2e-2, "flux {q}");
        }
    }

    /// Series solution of −Δv = 1 on the unit square at the center.
    fn square_center_series() -> f64 {
        let pi = std::f64::consts::PI;
        let mut s = 0.0;
        for m in (1..200).step_by(2) {
            for n in (1..200).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                let coef = 16.0 / (pi.powi(4) * mf * nf * (mf * mf + nf * nf));
                let sign = if ((m - 1) / 2 + (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                s += coef * sign;
            }
        }
        s
    }

    #[test]
    fn dirichlet_square_center() {
        let oracle = square_center_series();
        assert!((oracle - 0.073671).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let mesh = Mesh::square(n).unwrap();
            let v = solve_dirichlet(&mesh, &one(&mesh)).unwrap().v;
            let center = mesh
                .vertices()
                .iter()
                .position(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12)
                .unwrap();
            let err = (v[center] - oracle).abs();
            assert!(err < 2.0 / (n * n) as f64, "n = {n}: error {err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn dirichlet_zero_source_lenient() {
        let mesh = Mesh::square(4).unwrap();
        let zero = ScalarField::constant(&mesh, 0.0);
        assert!(solve_dirichlet(&mesh, &zero).is_err());
        let sol = solve_dirichlet_with(&mesh, &zero, SourcePolicy::Lenient).unwrap();
        assert!(sol.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_limits_and_symmetry() {
        let n = 8;
        let mesh = Mesh::square(n).unwrap();
        let all: Vec<usize> = (0..mesh.n_boundary_edges()).collect();
        let full = solve_mixed(&mesh, &all, &one(&mesh)).unwrap();
        let dir = solve_dirichlet(&mesh, &one(&mesh)).unwrap().v;
        assert!(full.iter().zip(dir.iter()).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(solve_mixed(&mesh, &[], &one(&mesh)).is_err());

        // Edges run counterclockwise from (0,0): bottom, right, top, left.
        let bottom: Vec<usize> = (0..n).collect();
        let right: Vec<usize> = (n..2 * n).collect();
        let left: Vec<usize> = (3 * n..4 * n).collect();
        let vb = solve_mixed(&mesh, &bottom, &one(&mesh)).unwrap();
        let imax = (0..mesh.n_vertices()).max_by(|&a, &b| vb[a].total_cmp(&vb[b])).unwrap();
        assert!((mesh.vertices()[imax][1] - 1.0).abs() < 1e-14);

        let vr = solve_mixed(&mesh, &right, &one(&mesh)).unwrap();
        let vl = solve_mixed(&mesh, &left, &one(&mesh)).unwrap();
        for (i, p) in mesh.vertices().iter().enumerate() {
            // The diagonal direction breaks the mirror symmetry of the mesh, so
            // compare after reflecting both coordinates (a symmetry of the mesh).
            let j = mesh
                .vertices()
                .iter()
                .position(|q| (q[0] - (1.0 - p[0])).abs() < 1e-12 && (q[1] - (1.0 - p[1])).abs() < 1e-12)
                .unwrap();
            assert!((vr[i] - vl[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_source_constant_and_positive() {
        let mesh = Mesh::disk(64, 12).unwrap();
        let beta = BoundaryField::constant(&mesh, 1.0);
        let z = solve_robin_boundary_source(&mesh, &beta, &BoundaryField::constant(&mesh, 1.0)).unwrap();
        assert!(z.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let z3 = solve_robin_boundary_source(&mesh, &beta, &BoundaryField::constant(&mesh, 3.0)).unwrap();
        assert!(z3.iter().all(|v| (v - 3.0).abs() < 1e-10));

        let coarse = Mesh::square(4).unwrap();
        let b = BoundaryField::constant(&coarse, 0.5);
        let zi = solve_robin_boundary_source(&coarse, &b, &BoundaryField::indicator(&coarse, &[5])).unwrap();
        // Dense oracle.
        let ops = Operators::new(&coarse);
        let a = ops.robin_matrix(&coarse, &b).to_dense();
        let rhs = assembly::boundary_load(&coarse, &BoundaryField::indicator(&coarse, &[5])).unwrap();
        let x = a.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
        for i in 0..coarse.n_vertices() {
            assert!(zi[i] > 0.0);
            assert!((zi[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_bounds_and_stability() {
        let mesh = Mesh::disk(48, 10).unwrap();
        let data = LogisticData::new(ScalarField::constant(&mesh, 1.0));
        let beta = BoundaryField::constant(&mesh, 0.25);
        let y = solve_logistic(&mesh, &beta, &data).unwrap();
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
        let mu = stability_eigenvalue(&mesh, &beta, &y, &data).unwrap();
        assert!(mu > 0.0);
        let half = y.scaled(0.5);
        assert!(stability_eigenvalue(&mesh, &beta, &half, &data).is_ok());
    }

    #[test]
    fn logistic_hypothesis_violation() {
        // ∫m = area ≈ π < ∫β = 2π.
        let mesh = Mesh::disk(32, 6).unwrap();
        let data = LogisticData::new(ScalarField::constant(&mesh, 1.0));
        let r = solve_logistic(&mesh, &BoundaryField::constant(&mesh, 1.0), &data);
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn logistic_small_beta_approaches_resource() {
        let mesh = Mesh::square(10).unwrap();
        let data = LogisticData::new(ScalarField::constant(&mesh, 2.0));
        let mut prev = f64::INFINITY;
        for b in [1e-1, 1e-2, 1e-3] {
            let y = solve_logistic(&mesh, &BoundaryField::constant(&mesh, b), &data).unwrap();
            let dev = y.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
            assert!(dev < prev);
            prev = dev;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn logistic_mesh_convergence() {
        let data_for = |mesh: &Mesh| LogisticData::new(ScalarField::constant(mesh, 1.0));
        let total = |n: usize| {
            let mesh = Mesh::square(n).unwrap();
            let ops = Operators::new(&mesh);
            let y = solve_logistic(&mesh, &BoundaryField::constant(&mesh, 0.1), &data_for(&mesh)).unwrap();
            dot(&ops.weights, &y)
        };
        let (a, b, c) = (total(8), total(16), total(32));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 3.0, "self-convergence ratio {ratio}");
    }

    #[test]
    fn stability_without_reaction_matches_dense() {
        let mesh = Mesh::square(5).unwrap();
        let ops = Operators::new(&mesh);
        let beta = BoundaryField::from_fn(&mesh, |e| if e < 10 { 1.0 } else { 0.0 });
        let a = ops.robin_matrix(&mesh, &beta);
        let mu = smallest_pencil_eigenvalue(&a, &ops.mass, 0.0).unwrap();
        let oracle = dense_pencil_min(&a, &ops.mass);
        assert!(mu > 0.0);
        assert!((mu - oracle).abs() < 1e-8 * oracle.max(1.0));
    }

    #[test]
    fn stability_with_reaction_matches_dense() {
        let mesh = Mesh::square(5).unwrap();
        let ops = Operators::new(&mesh);
        let beta = BoundaryField::constant(&mesh, 0.1);
        let data = LogisticData::new(ScalarField::from_point_fn(&mesh, |p| 1.0 + p[0]));
        let y = solve_logistic(&mesh, &beta, &data).unwrap();
        let mu = stability_eigenvalue(&mesh, &beta, &y, &data).unwrap();
        let jac = logistic_jacobian(&ops.robin_matrix(&mesh, &beta), &ops.weights, &data.m, &y);
        let oracle = dense_pencil_min(&jac, &ops.mass);
        assert!((mu - oracle).abs() < 1e-8 * oracle.abs().max(1.0));
    }
}
