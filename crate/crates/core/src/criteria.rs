//! Cost integrands, problem specifications and criterion evaluation.

use serde::{Deserialize, Serialize};

use crate::assembly::{self, Operators, SourcePolicy};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::{dot, SolverKind, SymmetricSolver};
use crate::state::{self, LogisticData, RobinOperator};

/// Integrand j of the boundary and distributed criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriterionJ {
    /// j(u) = u
    Identity,
    /// j(u) = u^γ with γ > 0, γ ≠ 1
    Power { gamma: f64 },
    /// j(u) = −u²/2 + (a/2)u, increasing only while u < a/2
    ConcaveQuadratic { a: f64 },
}

impl CriterionJ {
    pub fn power(gamma: f64) -> Result<Self> {
        let j = CriterionJ::Power { gamma };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CriterionJ::Power { gamma } if !(gamma > 0.0 && gamma != 1.0 && gamma.is_finite()) => Err(
                Error::InvalidParameter(format!("power exponent must be positive and not 1, got {gamma}")),
            ),
            CriterionJ::ConcaveQuadratic { a } if !(a > 0.0 && a.is_finite()) => Err(Error::InvalidParameter(
                format!("concave quadratic parameter must be positive, got {a}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            CriterionJ::Identity => u,
            CriterionJ::Power { gamma } => u.powf(gamma),
            CriterionJ::ConcaveQuadratic { a } => -0.5 * u * u + 0.5 * a * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            CriterionJ::Identity => 1.0,
            CriterionJ::Power { gamma } => gamma * u.powf(gamma - 1.0),
            CriterionJ::ConcaveQuadratic { a } => 0.5 * a - u,
        }
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        match *self {
            CriterionJ::Identity => 0.0,
            CriterionJ::Power { gamma } => gamma * (gamma - 1.0) * u.powf(gamma - 2.0),
            CriterionJ::ConcaveQuadratic { .. } => -1.0,
        }
    }

    /// Checks j' > 0 on [0, max_u].
    pub fn check_window(&self, max_u: f64) -> Result<()> {
        match *self {
            CriterionJ::ConcaveQuadratic { a } if max_u >= 0.5 * a => Err(Error::CriterionWindow {
                max_u,
                limit: 0.5 * a,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// ∫_∂Ω j(u)
    Boundary,
    /// ∫_Ω j(u)
    Distributed,
    /// ∫_Ω f u
    Compliance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// +1 for maximization, −1 for minimization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    /// Whether `a` is at least as good as `b`.
    pub fn improves(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Maximize => a >= b,
            Sense::Minimize => a <= b,
        }
    }
}

/// The state equation behind a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateModel {
    /// −Δu = f, ∂_ν u + βu = 0
    Linear { f: ScalarField },
    /// −Δy = y(m − y), ∂_ν y + βy = 0
    Logistic(LogisticData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub flavor: Flavor,
    pub sense: Sense,
    /// Ignored by the compliance flavor.
    pub j: CriterionJ,
    pub model: StateModel,
    pub v0: f64,
}

impl ProblemSpec {
    pub fn linear(flavor: Flavor, sense: Sense, j: CriterionJ, f: ScalarField, v0: f64) -> Self {
        Self {
            flavor,
            sense,
            j,
            model: StateModel::Linear { f },
            v0,
        }
    }

    pub fn compliance(sense: Sense, f: ScalarField, v0: f64) -> Self {
        Self::linear(Flavor::Compliance, sense, CriterionJ::Identity, f, v0)
    }

    pub fn logistic(flavor: Flavor, sense: Sense, j: CriterionJ, data: LogisticData, v0: f64) -> Self {
        Self {
            flavor,
            sense,
            j,
            model: StateModel::Logistic(data),
            v0,
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let total = mesh.perimeter();
        if !(self.v0 > 0.0 && self.v0 < total) {
            return Err(Error::Infeasible { v0: self.v0, total });
        }
        self.j.validate()?;
        match &self.model {
            StateModel::Linear { f } => f.check(mesh),
            StateModel::Logistic(data) => {
                if self.flavor == Flavor::Compliance {
                    return Err(Error::InvalidParameter(
                        "the compliance criterion is defined for the linear state only".into(),
                    ));
                }
                data.m.check(mesh)
            }
        }
    }
}

/// A state together with the factored linearized operator used for the
/// adjoint and sensitivity solves.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub u: ScalarField,
    operator: SymmetricSolver,
}

impl StateSolution {
    pub(crate) fn new(u: ScalarField, operator: SymmetricSolver) -> Self {
        Self { u, operator }
    }

    pub fn solve_linearized(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.operator.solve(rhs)
    }
}

/// Mesh operators and problem data assembled once and shared across solves.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub mesh: &'a Mesh,
    pub spec: &'a ProblemSpec,
    pub ops: Operators,
    /// M f for the linear model.
    load: Vec<f64>,
    pub solver: SolverKind,
}

impl<'a> Problem<'a> {
    pub fn new(mesh: &'a Mesh, spec: &'a ProblemSpec) -> Result<Self> {
        spec.validate(mesh)?;
        let load = match &spec.model {
            StateModel::Linear { f } => assembly::load_vector(mesh, f, SourcePolicy::Strict)?,
            StateModel::Logistic(_) => Vec::new(),
        };
        Ok(Self {
            mesh,
            spec,
            ops: Operators::new(mesh),
            load,
            solver: SolverKind::Direct,
        })
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn solve_state(&self, beta: &BoundaryField) -> Result<StateSolution> {
        match &self.spec.model {
            StateModel::Linear { .. } => {
                let op = RobinOperator::new(self.mesh, &self.ops, beta, self.solver)?;
                let u = op.solve(&self.load)?;
                Ok(StateSolution {
                    u: ScalarField::from_vec_unchecked(u),
                    operator: op.into_solver(),
                })
            }
            StateModel::Logistic(data) => {
                let st = state::solve_logistic_with(self.mesh, &self.ops, beta, data)?;
                let a = self.ops.robin_matrix(self.mesh, beta);
                let jac = state::logistic_jacobian(&a, &self.ops.weights, &data.m, &st.y);
                let operator = SymmetricSolver::spd(jac, SolverKind::Direct).map_err(|e| match e {
                    Error::Indefinite { .. } => Error::Hypothesis(
                        "linearized logistic operator is not positive definite (stability eigenvalue ≤ 0)".into(),
                    ),
                    other => other,
                })?;
                Ok(StateSolution { u: st.y, operator })
            }
        }
    }

    /// Nodal quadrature weights of the criterion (boundary trapezoid or lumped mass).
    pub(crate) fn criterion_weights(&self) -> &[f64] {
        match self.spec.flavor {
            Flavor::Boundary => &self.ops.boundary_weights,
            Flavor::Distributed | Flavor::Compliance => &self.ops.weights,
        }
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        match self.spec.flavor {
            Flavor::Compliance => Ok(dot(&self.load, u)),
            Flavor::Boundary | Flavor::Distributed => {
                let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                self.spec.j.check_window(max_u)?;
                let j = self.spec.j;
                Ok(self
                    .criterion_weights()
                    .iter()
                    .zip(u)
                    .map(|(w, &v)| w * j.value(v))
                    .sum())
            }
        }
    }

    /// Solves the state and evaluates the criterion.
    pub fn objective(&self, beta: &BoundaryField) -> Result<f64> {
        let st = self.solve_state(beta)?;
        self.value(&st.u)
    }
}

/// Evaluates the criterion of `spec` at a given state.
pub fn eval_criterion(spec: &ProblemSpec, mesh: &Mesh, u: &ScalarField) -> Result<f64> {
    u.check(mesh)?;
    Problem::new(mesh, spec)?.value(u)
}

/// Returns (∫ f u_β, −2 E_β(u_β)) with E_β(u) = ½uᵀKu + ½uᵀM_∂(β)u − fᵀMu.
pub fn compliance_energy_identity(mesh: &Mesh, beta: &BoundaryField, f: &ScalarField) -> Result<(f64, f64)> {
    let ops = Operators::new(mesh);
    let load = assembly::load_vector(mesh, f, SourcePolicy::Strict)?;
    let op = RobinOperator::new(mesh, &ops, beta, SolverKind::Direct)?;
    let u = op.solve(&load)?;
    let lhs = dot(&load, &u);
    let energy = 0.5 * ops.stiffness.bilinear(&u, &u)
        + 0.5 * assembly::boundary_mass(mesh, beta)?.bilinear(&u, &u)
        - dot(&load, &u);
    Ok((lhs, -2.0 * energy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrand_derivatives_match_differences() {
        let js = [
            CriterionJ::Identity,
            CriterionJ::power(2.0).unwrap(),
            CriterionJ::power(0.5).unwrap(),
            CriterionJ::ConcaveQuadratic { a: 3.0 },
        ];
        let eps = 1e-5;
        for j in js {
            for u in [0.3, 0.7, 1.1] {
                let d1 = (j.value(u + eps) - j.value(u - eps)) / (2.0 * eps);
                let d2 = (j.derivative(u + eps) - j.derivative(u - eps)) / (2.0 * eps);
                assert!((d1 - j.derivative(u)).abs() < 1e-8);
                assert!((d2 - j.second_derivative(u)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn power_exponent_validated() {
        assert!(CriterionJ::power(1.0).is_err());
        assert!(CriterionJ::power(-2.0).is_err());
    }

    #[test]
    fn concave_window() {
        let j = CriterionJ::ConcaveQuadratic { a: 2.0 };
        assert!(j.check_window(0.99).is_ok());
        assert!(matches!(j.check_window(1.0), Err(Error::CriterionWindow { .. })));
        assert!(j.derivative(0.99) > 0.0);
    }

    #[test]
    fn constant_state_values() {
        let mesh = Mesh::square(4).unwrap();
        let f = ScalarField::constant(&mesh, 1.0);
        let c = 0.7;
        let u = ScalarField::constant(&mesh, c);
        let bnd = ProblemSpec::linear(Flavor::Boundary, Sense::Maximize, CriterionJ::Identity, f.clone(), 1.0);
        assert!((eval_criterion(&bnd, &mesh, &u).unwrap() - 4.0 * c).abs() < 1e-12);
        let dist = ProblemSpec::linear(
            Flavor::Distributed,
            Sense::Maximize,
            CriterionJ::power(2.0).unwrap(),
            f.clone(),
            1.0,
        );
        assert!((eval_criterion(&dist, &mesh, &u).unwrap() - c * c).abs() < 1e-12);
        let conc = ProblemSpec::linear(
            Flavor::Boundary,
            Sense::Minimize,
            CriterionJ::ConcaveQuadratic { a: 1.0 },
            f,
            1.0,
        );
        assert!(matches!(
            eval_criterion(&conc, &mesh, &u),
            Err(Error::CriterionWindow { .. })
        ));
    }

    #[test]
    fn infeasible_mass_rejected() {
        let mesh = Mesh::square(2).unwrap();
        let f = ScalarField::constant(&mesh, 1.0);
        for v0 in [0.0, 4.0, 5.0] {
            let spec = ProblemSpec::compliance(Sense::Minimize, f.clone(), v0);
            assert!(matches!(spec.validate(&mesh), Err(Error::Infeasible { .. })));
        }
    }

    #[test]
    fn compliance_disk_radial() {
        // ∫₀¹ ((1 − r²)/4 + 1/2) 2πr dr = 0.625π
        let mesh = Mesh::disk(128, 24).unwrap();
        let f = ScalarField::constant(&mesh, 1.0);
        let beta = BoundaryField::constant(&mesh, 1.0);
        let (lhs, rhs) = compliance_energy_identity(&mesh, &beta, &f).unwrap();
        assert!((lhs - 0.625 * std::f64::consts::PI).abs() < 1e-2);
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs());
        let (l2, r2) = compliance_energy_identity(&mesh, &beta, &f.scaled(2.0)).unwrap();
        assert!((l2 - 4.0 * lhs).abs() < 1e-10 && (r2 - 4.0 * rhs).abs() < 1e-10);
    }

    #[test]
    fn compliance_energy_identity_random_beta() {
        let mesh = Mesh::square(6).unwrap();
        let f = ScalarField::from_point_fn(&mesh, |p| 1.0 + p[0] * p[1]);
        let beta = BoundaryField::from_fn(&mesh, |e| ((e * 7) % 5) as f64 / 4.0);
        let (lhs, rhs) = compliance_energy_identity(&mesh, &beta, &f).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs());
    }

    #[test]
    fn logistic_compliance_rejected() {
        let mesh = Mesh::square(2).unwrap();
        let data = LogisticData::new(ScalarField::constant(&mesh, 1.0));
        let spec = ProblemSpec::logistic(Flavor::Compliance, Sense::Maximize, CriterionJ::Identity, data, 0.5);
        assert!(spec.validate(&mesh).is_err());
    }
}
