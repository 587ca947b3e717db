//! Penalized Robin problems ∂_ν u + α 1_Γ u = 0 and their limit as α → ∞,
//! the mixed problem with v = 0 on Γ.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{self, Operators, SourcePolicy};
use crate::error::{Error, Result};
use crate::fields::{BoundaryField, ScalarField};
use crate::mesh::Mesh;
use crate::sparse::{dot, SolverKind};
use crate::state::{self, RobinOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEntry {
    pub alpha: f64,
    /// ‖u_α − v^Γ‖ in the mass-matrix norm.
    pub l2_error: f64,
    /// |u_α − v^Γ| in the W^{1,2} seminorm.
    pub h1_error: f64,
    /// ½∫|∇u|² + (α/2)∫_Γ u² − ∫fu at u = u_α.
    pub energy: f64,
    /// ∫_Γ u_α².
    pub trace_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaSweep {
    pub entries: Vec<AlphaEntry>,
    /// ‖v^Γ‖ in the mass-matrix norm.
    pub limit_norm: f64,
    /// Energy of the limit, ½∫|∇v|² − ∫fv.
    pub limit_energy: f64,
    #[serde(skip)]
    pub limit: ScalarField,
}

impl AlphaSweep {
    /// Least-squares slope of log e against log α.
    pub fn observed_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| e.l2_error > 0.0)
            .map(|e| (e.alpha.ln(), e.l2_error.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Solves the penalized problems for each α and compares with the mixed solution.
pub fn alpha_sweep(mesh: &Mesh, gamma: &[usize], f: &ScalarField, alphas: &[f64]) -> Result<AlphaSweep> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("the α list is empty".into()));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) || alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "α values must be positive, finite and strictly ascending".into(),
        ));
    }
    // Also validates the edge indices in `gamma`.
    let limit = state::solve_mixed(mesh, gamma, f)?;
    let ops = Operators::new(mesh);
    let load = assembly::load_vector(mesh, f, SourcePolicy::Strict)?;
    let indicator = BoundaryField::indicator(mesh, gamma);
    let trace_mass = assembly::boundary_mass(mesh, &indicator)?;
    let l2 = |v: &[f64]| dot(v, &ops.mass.mul_vec(v)).max(0.0).sqrt();
    let semi = |v: &[f64]| dot(v, &ops.stiffness.mul_vec(v)).max(0.0).sqrt();
    let limit_energy = 0.5 * dot(&limit, &ops.stiffness.mul_vec(&limit)) - dot(&load, &limit);

    let entries = alphas
        .par_iter()
        .map(|&alpha| {
            let beta = indicator.scaled(alpha);
            let op = RobinOperator::new(mesh, &ops, &beta, SolverKind::Direct)?;
            let u = op.solve(&load)?;
            let diff: Vec<f64> = u.iter().zip(limit.iter()).map(|(a, b)| a - b).collect();
            let trace_sq = dot(&u, &trace_mass.mul_vec(&u));
            let energy = 0.5 * dot(&u, &ops.stiffness.mul_vec(&u)) + 0.5 * alpha * trace_sq - dot(&load, &u);
            Ok(AlphaEntry {
                alpha,
                l2_error: l2(&diff),
                h1_error: semi(&diff),
                energy,
                trace_sq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaSweep {
        entries,
        limit_norm: l2(&limit),
        limit_energy,
        limit,
    })
}

/// The sweep α = 4^k, k = 0..n.
pub fn geometric_alphas(n: usize) -> Vec<f64> {
    (0..n).map(|k| 4f64.powi(k as i32)).collect()
}
