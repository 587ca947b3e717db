//! Adjoint states, boundary gradients, sensitivities and second derivatives.

use serde::Serialize;

use crate::assembly::{self, boundary_mass_unchecked};
use crate::criteria::{Flavor, Problem, ProblemSpec, StateModel, StateSolution};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::{SolverKind, SymmetricSolver};
use crate::state::{self, RobinOperator};

/// Edges with ε < β < 1 − ε count as interior (neither 0 nor 1).
pub const INTERIOR_EPS: f64 = 1e-3;

/// Derivative data at one β: the criterion changes by −Σ_e L_e h_e phi_e along h.
#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    pub phi: BoundaryField,
    pub value: f64,
    /// L-weighted mean of phi over interior edges (all edges if none).
    pub lambda: f64,
    #[serde(skip)]
    pub u: ScalarField,
    #[serde(skip)]
    pub p: ScalarField,
}

impl GradientReport {
    /// Directional derivative −Σ_e L_e h_e phi_e.
    pub fn directional(&self, mesh: &Mesh, h: &BoundaryField) -> f64 {
        -self.phi.weighted_dot(h, mesh)
    }
}

/// L-weighted mean of `phi` over the edges with ε < β < 1 − ε, or over all
/// edges when there are none.
pub fn multiplier_estimate(mesh: &Mesh, beta: &[f64], phi: &[f64], eps: f64) -> f64 {
    let edges = mesh.boundary_edges();
    let interior = |b: f64| b > eps && b < 1.0 - eps;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, (&b, &f)) in edges.iter().zip(beta.iter().zip(phi)) {
        if interior(b) {
            num += e.length * f;
            den += e.length;
        }
    }
    if den == 0.0 {
        for (e, &f) in edges.iter().zip(phi) {
            num += e.length * f;
            den += e.length;
        }
    }
    num / den
}

impl Problem<'_> {
    /// Right-hand side of the adjoint equation: the derivative of the discrete
    /// criterion with respect to the nodal state.
    fn adjoint_rhs(&self, u: &[f64]) -> Vec<f64> {
        match self.spec.flavor {
            Flavor::Compliance => self.load().to_vec(),
            Flavor::Boundary | Flavor::Distributed => {
                let j = self.spec.j;
                self.criterion_weights()
                    .iter()
                    .zip(u)
                    .map(|(w, &v)| w * j.derivative(v))
                    .collect()
            }
        }
    }

    pub fn adjoint(&self, st: &StateSolution) -> Result<ScalarField> {
        if self.spec.flavor == Flavor::Compliance {
            return Ok(st.u.clone());
        }
        let p = st.solve_linearized(&self.adjoint_rhs(&st.u))?;
        Ok(ScalarField::from_vec_unchecked(p))
    }

    pub fn gradient(&self, beta: &BoundaryField) -> Result<GradientReport> {
        let st = self.solve_state(beta)?;
        let value = self.value(&st.u)?;
        let p = self.adjoint(&st)?;
        let phi = assembly::edge_product_mean(self.mesh, &st.u, &p);
        let lambda = multiplier_estimate(self.mesh, beta, &phi, INTERIOR_EPS);
        Ok(GradientReport {
            phi: BoundaryField::from_vec_unchecked(phi),
            value,
            lambda,
            u: st.u,
            p,
        })
    }

    /// u̇ solving the linearized state equation with right-hand side −M_∂(h)u.
    pub fn sensitivity(&self, st: &StateSolution, h: &BoundaryField) -> Result<ScalarField> {
        h.check(self.mesh)?;
        let rhs: Vec<f64> = boundary_mass_unchecked(self.mesh, h)
            .mul_vec(&st.u)
            .into_iter()
            .map(|v| -v)
            .collect();
        Ok(ScalarField::from_vec_unchecked(st.solve_linearized(&rhs)?))
    }

    /// J̈(β)[h, h].
    pub fn second_derivative(&self, beta: &BoundaryField, h: &BoundaryField) -> Result<f64> {
        let st = self.solve_state(beta)?;
        let p = self.adjoint(&st)?;
        self.second_derivative_at(&st, &p, h)
    }

    pub fn second_derivative_at(&self, st: &StateSolution, p: &[f64], h: &BoundaryField) -> Result<f64> {
        let udot = self.sensitivity(st, h)?;
        let mh = boundary_mass_unchecked(self.mesh, h);
        let mut value = -2.0 * mh.bilinear(p, &udot);
        if self.spec.flavor != Flavor::Compliance {
            let j = self.spec.j;
            value += self
                .criterion_weights()
                .iter()
                .zip(st.u.iter().zip(udot.iter()))
                .map(|(w, (&u, &d))| w * j.second_derivative(u) * d * d)
                .sum::<f64>();
        }
        if let StateModel::Logistic(_) = self.spec.model {
            // ∂²g/∂y² = −2 for g(y) = y(m − y).
            value -= 2.0
                * self
                    .ops
                    .weights
                    .iter()
                    .zip(p.iter().zip(udot.iter()))
                    .map(|(w, (&pi, &d))| w * pi * d * d)
                    .sum::<f64>();
        }
        Ok(value)
    }
}

/// Adjoint state for a given state `u` of the problem.
pub fn adjoint_state(spec: &ProblemSpec, mesh: &Mesh, beta: &BoundaryField, u: &ScalarField) -> Result<ScalarField> {
    u.check(mesh)?;
    let problem = Problem::new(mesh, spec)?;
    let st = linearized_at(&problem, beta, u)?;
    problem.adjoint(&st)
}

pub fn gradient(spec: &ProblemSpec, mesh: &Mesh, beta: &BoundaryField) -> Result<GradientReport> {
    Problem::new(mesh, spec)?.gradient(beta)
}

pub fn sensitivity(
    spec: &ProblemSpec,
    mesh: &Mesh,
    beta: &BoundaryField,
    u: &ScalarField,
    h: &BoundaryField,
) -> Result<ScalarField> {
    u.check(mesh)?;
    let problem = Problem::new(mesh, spec)?;
    let st = linearized_at(&problem, beta, u)?;
    problem.sensitivity(&st, h)
}

pub fn second_derivative(spec: &ProblemSpec, mesh: &Mesh, beta: &BoundaryField, h: &BoundaryField) -> Result<f64> {
    Problem::new(mesh, spec)?.second_derivative(beta, h)
}

/// Wraps a caller-supplied state with the operator linearized at it.
fn linearized_at(problem: &Problem<'_>, beta: &BoundaryField, u: &ScalarField) -> Result<StateSolution> {
    let operator = match &problem.spec.model {
        StateModel::Linear { .. } => {
            RobinOperator::new(problem.mesh, &problem.ops, beta, SolverKind::Direct)?.into_solver()
        }
        StateModel::Logistic(data) => {
            beta.check(problem.mesh)?;
            let a = problem.ops.robin_matrix(problem.mesh, beta);
            let jac = state::logistic_jacobian(&a, &problem.ops.weights, &data.m, u);
            SymmetricSolver::spd(jac, SolverKind::Direct).map_err(|_| {
                Error::Hypothesis("linearized logistic operator is not positive definite".into())
            })?
        }
    };
    Ok(StateSolution::new(u.clone(), operator))
}

/// Relative residual of ∂_ν Φ + 2βΦ = j'(u)u on the boundary, Φ = u p, for the
/// boundary flavor with the linear state. Normal derivatives are taken from the
/// gradients on the triangles owning each boundary edge, so the residual is a
/// first-order quantity that vanishes under refinement.
pub fn switch_function_residual(problem: &Problem<'_>, beta: &BoundaryField) -> Result<f64> {
    if problem.spec.flavor != Flavor::Boundary || !matches!(problem.spec.model, StateModel::Linear { .. }) {
        return Err(Error::InvalidParameter(
            "the switch-function identity holds for the boundary criterion with the linear state".into(),
        ));
    }
    let mesh = problem.mesh;
    let g = problem.gradient(beta)?;
    let (u, p) = (&g.u, &g.p);
    let j = problem.spec.j;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, e) in mesh.boundary_edges().iter().enumerate() {
        let [a, b] = e.vertices;
        let gu = assembly::triangle_gradient(mesh, e.triangle, u);
        let gp = assembly::triangle_gradient(mesh, e.triangle, p);
        let dn_u = gu[0] * e.normal[0] + gu[1] * e.normal[1];
        let dn_p = gp[0] * e.normal[0] + gp[1] * e.normal[1];
        let um = 0.5 * (u[a] + u[b]);
        let pm = 0.5 * (p[a] + p[b]);
        let rhs = 0.5 * (j.derivative(u[a]) * u[a] + j.derivative(u[b]) * u[b]);
        let res = pm * dn_u + um * dn_p + 2.0 * beta[k] * g.phi[k] - rhs;
        num += e.length * res * res;
        den += e.length * rhs * rhs;
    }
    Ok((num / den).sqrt())
}
