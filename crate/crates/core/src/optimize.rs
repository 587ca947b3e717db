//! Projected-gradient optimization over the admissible set, optimality
//! diagnostics and second-order certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{GradientReport, INTERIOR_EPS};
use crate::admissible::{self, AdmissibleSpec};
use crate::criteria::{CriterionJ, Flavor, Problem, ProblemSpec, Sense};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::state;
use crate::steklov;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptOptions {
    pub max_iter: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Stop when ‖β − P(β ∓ ∇)‖ ≤ tol in the length-weighted norm.
    pub tol: f64,
    /// Barzilai–Borwein step lengths after the first iteration.
    pub barzilai_borwein: bool,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step0: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_halvings: 40,
            tol: 1e-8,
            barzilai_borwein: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub value: f64,
    pub pg_norm: f64,
    /// Step length that produced this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No sufficient decrease after the allowed halvings: the landscape is
    /// flat or noisy at the current resolution.
    LineSearchStalled,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptResult {
    pub beta_star: BoundaryField,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    pub termination: Termination,
    pub value: f64,
    pub pg_norm: f64,
    pub lambda: f64,
}

const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e4;
const VALUE_RESOLUTION: f64 = 1e-14;

/// Maximizes or minimizes the criterion of `problem` from `beta0` (projected first).
pub fn projected_gradient(problem: &Problem<'_>, beta0: &BoundaryField, opts: &OptOptions) -> Result<OptResult> {
    let mesh = problem.mesh;
    beta0.check(mesh)?;
    let adm = AdmissibleSpec::for_mesh(mesh, problem.spec.v0)?;
    let sign = problem.spec.sense.sign();
    // Minimize F = −sign·J; its weighted gradient is sign·phi.
    let descent_grad = |g: &GradientReport| -> Vec<f64> { g.phi.iter().map(|p| sign * p).collect() };
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        adm.weights().iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    };
    let step_to = |beta: &[f64], grad: &[f64], s: f64| -> Result<Vec<f64>> {
        let trial: Vec<f64> = beta.iter().zip(grad).map(|(b, g)| b - s * g).collect();
        Ok(adm.project(&trial)?.values)
    };

    let mut beta = adm.project(beta0)?.values;
    let mut g = problem.gradient(&BoundaryField::from_vec_unchecked(beta.clone()))?;
    let mut grad = descent_grad(&g);
    let mut history = Vec::new();
    let mut step = opts.step0;
    let mut last_step = 0.0;
    let mut termination = Termination::MaxIterations;
    let mut pg_norm = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let unit = step_to(&beta, &grad, 1.0)?;
        pg_norm = adm.distance(&unit, &beta);
        history.push(HistoryEntry {
            iteration: it,
            value: g.value,
            pg_norm,
            step: last_step,
        });
        if pg_norm <= opts.tol {
            termination = Termination::Converged;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        let target = step_to(&beta, &grad, step)?;
        let d: Vec<f64> = target.iter().zip(&beta).map(|(t, b)| t - b).collect();
        let slope = wdot(&grad, &d);
        if !(slope < 0.0) {
            termination = Termination::LineSearchStalled;
            break;
        }
        let f0 = -sign * g.value;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = beta
                .iter()
                .zip(&target)
                .map(|(b, x)| ((1.0 - t) * b + t * x).clamp(0.0, 1.0))
                .collect();
            let gt = problem.gradient(&BoundaryField::from_vec_unchecked(trial.clone()))?;
            // The slack absorbs rounding in J once the predicted decrease
            // falls below the resolution of the value itself.
            let slack = VALUE_RESOLUTION * f0.abs().max(1.0);
            if -sign * gt.value <= f0 + opts.armijo_c * t * slope + slack {
                accepted = Some((trial, gt));
                break;
            }
            t *= opts.backtrack;
        }
        let Some((next, gn)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let grad_next = descent_grad(&gn);
        let s_vec: Vec<f64> = next.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = grad_next.iter().zip(&grad).map(|(a, b)| a - b).collect();
        last_step = t * step;
        step = if opts.barzilai_borwein {
            let sy = wdot(&s_vec, &y_vec);
            let ss = wdot(&s_vec, &s_vec);
            if sy > 0.0 {
                (ss / sy).clamp(STEP_MIN, STEP_MAX)
            } else {
                STEP_MAX
            }
        } else {
            opts.step0
        };
        beta = next;
        g = gn;
        grad = grad_next;
    }
    Ok(OptResult {
        beta_star: BoundaryField::from_vec_unchecked(beta),
        history,
        converged: termination == Termination::Converged,
        termination,
        value: g.value,
        pg_norm,
        lambda: g.lambda,
    })
}

/// A seeded random admissible coefficient.
pub fn random_feasible(mesh: &Mesh, v0: f64, seed: u64) -> Result<BoundaryField> {
    let adm = AdmissibleSpec::for_mesh(mesh, v0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..mesh.n_boundary_edges()).map(|_| rng.gen_range(0.0..1.0)).collect();
    Ok(BoundaryField::from_vec_unchecked(adm.project(&g)?.values))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistartResult {
    pub seeds: Vec<u64>,
    pub runs: Vec<OptResult>,
    /// Index of the best final value in `runs`.
    pub best: usize,
}

impl MultistartResult {
    pub fn best_run(&self) -> &OptResult {
        &self.runs[self.best]
    }
}

/// Runs the optimizer from seeded random starts in parallel; results do not
/// depend on the thread count.
pub fn multistart(problem: &Problem<'_>, seeds: &[u64], opts: &OptOptions) -> Result<MultistartResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("multistart needs at least one seed".into()));
    }
    let runs: Vec<OptResult> = seeds
        .par_iter()
        .map(|&s| {
            let beta0 = random_feasible(problem.mesh, problem.spec.v0, s)?;
            projected_gradient(problem, &beta0, opts)
        })
        .collect::<Result<_>>()?;
    let sense = problem.spec.sense;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if !sense.improves(runs[best].value, r.value) {
            best = i;
        }
    }
    Ok(MultistartResult {
        seeds: seeds.to_vec(),
        runs,
        best,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BangBangCertificate {
    pub ddot_j: f64,
    #[serde(skip)]
    pub h: BoundaryField,
    pub k: usize,
    /// σ_K, the first eigenvalue not constrained by the moment conditions.
    pub sigma_k: f64,
    pub support_edges: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub intermediate_length: f64,
    pub intermediate_fraction: f64,
    pub bangbang_fraction: f64,
    /// Length of {β ≤ ε}.
    pub zero_set_length: f64,
    pub lambda: f64,
    pub level_set_residual: f64,
    pub certificate: Option<BangBangCertificate>,
}

/// First-order optimality residual and structure measures at β.
pub fn kkt_residual(problem: &Problem<'_>, beta: &BoundaryField) -> Result<StructureReport> {
    let mesh = problem.mesh;
    let g = problem.gradient(beta)?;
    let lengths = mesh.edge_lengths();
    let eps = INTERIOR_EPS;
    let sign = problem.spec.sense.sign();
    let mut residual = 0.0f64;
    for (&b, &phi) in beta.iter().zip(g.phi.iter()) {
        let diff = phi - g.lambda;
        let v = if b > eps && b < 1.0 - eps {
            diff.abs()
        } else if b <= eps {
            // Minimization needs phi ≤ λ where β = 0; maximization phi ≥ λ.
            (-sign * diff).max(0.0)
        } else {
            (sign * diff).max(0.0)
        };
        residual = residual.max(v);
    }
    let perimeter = mesh.perimeter();
    let intermediate = admissible::intermediate_measure(beta, &lengths, eps)?;
    Ok(StructureReport {
        intermediate_length: intermediate,
        intermediate_fraction: intermediate / perimeter,
        bangbang_fraction: 1.0 - intermediate / perimeter,
        zero_set_length: admissible::zero_set_measure(beta, &lengths, eps)?,
        lambda: g.lambda,
        level_set_residual: residual,
        certificate: None,
    })
}

/// J̈(β)[h, h] along a high-frequency perturbation supported on the
/// intermediate set {ε < β < 1 − ε} and orthogonal to the first K modes.
pub fn bangbang_certificate(problem: &Problem<'_>, beta: &BoundaryField, k: usize, seed: u64) -> Result<BangBangCertificate> {
    let mesh = problem.mesh;
    let support = admissible::interior_edges(beta, INTERIOR_EPS);
    if support.is_empty() {
        return Err(Error::InvalidParameter(
            "β has no intermediate values; there is nothing to certify".into(),
        ));
    }
    if support.len() < k + 2 {
        return Err(Error::SupportTooSmall {
            support: support.len(),
            required: k + 2,
        });
    }
    let eigs = steklov::steklov_eigs(mesh, beta, k + 1)?;
    let st = problem.solve_state(beta)?;
    let p = problem.adjoint(&st)?;
    let h = admissible::build_highfreq(mesh, &support, k, &eigs, &st.u, seed)?;
    let ddot_j = problem.second_derivative_at(&st, &p, &h)?;
    Ok(BangBangCertificate {
        ddot_j,
        h,
        k,
        sigma_k: eigs.sigmas[k],
        support_edges: support.len(),
        seed,
    })
}

/// Smallest K whose σ_K reaches `sigma_min` at β, if the boundary has enough vertices.
pub fn cutoff_for_sigma(mesh: &Mesh, beta: &BoundaryField, sigma_min: f64) -> Result<usize> {
    let nb = mesh.boundary_vertices().len();
    let eigs = steklov::steklov_eigs(mesh, beta, nb)?;
    eigs.sigmas
        .iter()
        .position(|&s| s >= sigma_min)
        .ok_or_else(|| Error::InvalidParameter(format!("no Steklov eigenvalue reaches {sigma_min} on this mesh")))
}

/// Estimate of sup_β max u_β over sampled admissible β: the uniform
/// coefficient, seeded random projections and seeded contiguous arcs.
pub fn estimate_u0(mesh: &Mesh, f: &ScalarField, v0: f64, samples: usize, seed: u64) -> Result<f64> {
    let adm = AdmissibleSpec::for_mesh(mesh, v0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = mesh.n_boundary_edges();
    let mut candidates = vec![adm.uniform()];
    for s in 0..samples {
        if s % 2 == 0 {
            let g: Vec<f64> = (0..ne).map(|_| rng.gen_range(0.0..1.0)).collect();
            candidates.push(adm.project(&g)?.values);
        } else {
            let start = rng.gen_range(0..ne);
            candidates.push(arc_indicator(mesh, start, v0));
        }
    }
    let mut u0 = 0.0f64;
    for c in candidates {
        let u = state::solve_robin(mesh, &BoundaryField::from_vec_unchecked(c), f)?;
        u0 = u0.max(u.max());
    }
    Ok(u0)
}

/// Indicator of a contiguous run of edges starting at `start` with total mass
/// `v0`; the last edge takes the fractional remainder.
pub fn arc_indicator(mesh: &Mesh, start: usize, v0: f64) -> Vec<f64> {
    let edges = mesh.boundary_edges();
    let ne = edges.len();
    let mut beta = vec![0.0; ne];
    let mut left = v0;
    for k in 0..ne {
        let e = (start + k) % ne;
        if left <= 0.0 {
            break;
        }
        let take = (left / edges[e].length).min(1.0);
        beta[e] = take;
        left -= take * edges[e].length;
    }
    beta
}

/// Quantities of the low-mode second-order test for the concave criterion
/// j(u) = −u²/2 + (a/2)u, a = U₀ + 1/C.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationCertificate {
    pub ddot_j: f64,
    /// max z_β / min u_β, with ∂_ν z + βz = 1.
    pub k_const: f64,
    /// σ₂ for β ≡ 1.
    pub lambda2: f64,
    pub c: f64,
    pub u0: f64,
    pub a: f64,
    /// Whether j' > 0 holds on [0, U₀], i.e. C·U₀ < 1.
    pub window_ok: bool,
    #[serde(skip)]
    pub h: BoundaryField,
}

/// K(β) = max z_β / min u_β.
pub fn k_constant(mesh: &Mesh, beta: &BoundaryField, f: &ScalarField) -> Result<f64> {
    let u = state::solve_robin(mesh, beta, f)?;
    let z = state::solve_robin_boundary_source(mesh, beta, &BoundaryField::constant(mesh, 1.0))?;
    Ok(z.max() / u.min())
}

/// Λ₂, the eigenvalue with index 2 of the Robin–Steklov problem with β ≡ 1.
pub fn lambda2(mesh: &Mesh) -> Result<f64> {
    Ok(steklov::steklov_eigs(mesh, &BoundaryField::constant(mesh, 1.0), 3)?.sigmas[2])
}

/// Evaluates J̈ along the low-mode perturbation for the boundary criterion
/// with the concave integrand, C = c_factor·Λ₂·K(β).
pub fn relaxation_certificate(
    mesh: &Mesh,
    beta: &BoundaryField,
    f: &ScalarField,
    u0: f64,
    c_factor: f64,
) -> Result<RelaxationCertificate> {
    if !(c_factor > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "C must exceed Λ₂·K; the factor {c_factor} is not above 1"
        )));
    }
    let k_const = k_constant(mesh, beta, f)?;
    let l2 = lambda2(mesh)?;
    let c = c_factor * l2 * k_const;
    let a = u0 + 1.0 / c;
    let v0 = beta.integral(mesh);
    let spec = ProblemSpec::linear(
        Flavor::Boundary,
        Sense::Minimize,
        CriterionJ::ConcaveQuadratic { a },
        f.clone(),
        v0,
    );
    let problem = Problem::new(mesh, &spec)?;
    let st = problem.solve_state(beta)?;
    let eigs = steklov::steklov_eigs(mesh, beta, 3)?;
    let h = admissible::build_lowmode(mesh, &st.u, &eigs)?;
    let p = problem.adjoint(&st)?;
    let ddot_j = problem.second_derivative_at(&st, &p, &h)?;
    Ok(RelaxationCertificate {
        ddot_j,
        k_const,
        lambda2: l2,
        c,
        u0,
        a,
        window_ok: c * u0 < 1.0,
        h,
    })
}
