//! The admissible set {0 ≤ β ≤ 1, ∫_∂Ω β = V0}, projection onto it, and
//! structured perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly;
use crate::error::{Error, Result};
use crate::fields::BoundaryField;
use crate::mesh::Mesh;
use crate::steklov::EigPairs;

/// Target boundary mass and the edge weights (lengths) it is measured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSpec {
    v0: f64,
    weights: Vec<f64>,
}

/// Result of a projection: β = clamp(g − τ, 0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub values: Vec<f64>,
    pub tau: f64,
}

impl AdmissibleSpec {
    pub fn new(v0: f64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("edge weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(v0 > 0.0 && v0 < total) {
            return Err(Error::Infeasible { v0, total });
        }
        Ok(Self { v0, weights })
    }

    pub fn for_mesh(mesh: &Mesh, v0: f64) -> Result<Self> {
        Self::new(v0, mesh.edge_lengths())
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass(&self, beta: &[f64]) -> f64 {
        self.weights.iter().zip(beta).map(|(w, b)| w * b).sum()
    }

    /// Σ L_e (a_e − b_e)², square-rooted.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether β lies in the box and has mass V0 within `tol`.
    pub fn is_feasible(&self, beta: &[f64], tol: f64) -> bool {
        beta.iter().all(|&b| (0.0..=1.0).contains(&b)) && (self.mass(beta) - self.v0).abs() <= tol
    }

    /// Constant coefficient V0 / ΣL.
    pub fn uniform(&self) -> Vec<f64> {
        vec![self.v0 / self.total(); self.weights.len()]
    }

    fn clamped_mass(&self, g: &[f64], tau: f64) -> f64 {
        self.weights
            .iter()
            .zip(g)
            .map(|(w, &v)| w * (v - tau).clamp(0.0, 1.0))
            .sum()
    }

    /// Weighted Euclidean projection of `g`.
    pub fn project(&self, g: &[f64]) -> Result<Projection> {
        if g.len() != self.weights.len() {
            return Err(Error::SizeMismatch {
                what: "projected field",
                expected: self.weights.len(),
                found: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("cannot project a non-finite field".into()));
        }
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // mass(lo) = total > V0 and mass(hi) = 0 < V0.
        let (mut lo, mut hi) = (gmin - 1.0, gmax);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.clamped_mass(g, mid) > self.v0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut tau = 0.5 * (lo + hi);
        // Solve exactly for τ on the free set identified by the bisection.
        let (mut free_w, mut free_wg, mut upper) = (0.0, 0.0, 0.0);
        for (&w, &v) in self.weights.iter().zip(g) {
            let t = v - tau;
            if t >= 1.0 {
                upper += w;
            } else if t > 0.0 {
                free_w += w;
                free_wg += w * v;
            }
        }
        if free_w > 0.0 {
            let exact = (free_wg - (self.v0 - upper)) / free_w;
            if (exact - tau).abs() <= (hi - lo).max(1e-12 * (1.0 + tau.abs())) {
                tau = exact;
            }
        }
        let mut values: Vec<f64> = g.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).collect();
        let tol = 1e-12 * self.total().max(1.0);
        // For |g| ≫ 1 the rounding of g − τ dominates; shift the free entries
        // directly, which keeps the projection form with a corrected τ.
        for _ in 0..4 {
            let r = self.v0 - self.mass(&values);
            if r.abs() <= 0.1 * tol {
                break;
            }
            let free: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0 && values[i] < 1.0).collect();
            let free_w: f64 = free.iter().map(|&i| self.weights[i]).sum();
            if free_w > 0.0 {
                let shift = r / free_w;
                for &i in &free {
                    values[i] = (values[i] + shift).clamp(0.0, 1.0);
                }
                tau -= shift;
            } else {
                // Open the bound edge next in line.
                let pick = (0..values.len())
                    .filter(|&i| if r > 0.0 { values[i] == 0.0 } else { values[i] == 1.0 })
                    .max_by(|&i, &j| {
                        let o = g[i].total_cmp(&g[j]);
                        if r > 0.0 { o } else { o.reverse() }
                    });
                let Some(i) = pick else { break };
                values[i] = (values[i] + r / self.weights[i]).clamp(0.0, 1.0);
                tau = g[i] - values[i];
            }
        }
        let err = (self.mass(&values) - self.v0).abs();
        if err > tol {
            return Err(Error::NotConverged {
                what: "projection multiplier bisection",
                iterations: 200,
                residual: err,
            });
        }
        Ok(Projection { values, tau })
    }

    pub fn project_field(&self, g: &BoundaryField) -> Result<BoundaryField> {
        Ok(BoundaryField::from_vec_unchecked(self.project(g)?.values))
    }
}

/// Σ L_e over edges with ε < β_e < 1 − ε.
pub fn intermediate_measure(beta: &[f64], lengths: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(beta
        .iter()
        .zip(lengths)
        .filter(|(&b, _)| b > eps && b < 1.0 - eps)
        .map(|(_, l)| l)
        .sum())
}

/// Σ L_e over edges with β_e ≤ ε.
pub fn zero_set_measure(beta: &[f64], lengths: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(beta.iter().zip(lengths).filter(|(&b, _)| b <= eps).map(|(_, l)| l).sum())
}

/// Indices of the edges with ε < β_e < 1 − ε.
pub fn interior_edges(beta: &[f64], eps: f64) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, &b)| b > eps && b < 1.0 - eps)
        .map(|(i, _)| i)
        .collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 0.5), got {eps}")));
    }
    Ok(())
}

/// A unit-norm, mass-neutral perturbation supported on `support` whose
/// boundary moments against u φ_k vanish for the first `k` modes.
pub fn build_highfreq(
    mesh: &Mesh,
    support: &[usize],
    k: usize,
    eigs: &EigPairs,
    u: &[f64],
    seed: u64,
) -> Result<BoundaryField> {
    let required = k + 2;
    if support.len() < required {
        return Err(Error::SupportTooSmall {
            support: support.len(),
            required,
        });
    }
    if eigs.count() < k {
        return Err(Error::InvalidParameter(format!(
            "{k} moment conditions requested but only {} eigenpairs are available",
            eigs.count()
        )));
    }
    let ne = mesh.n_boundary_edges();
    if let Some(&e) = support.iter().find(|&&e| e >= ne) {
        return Err(Error::InvalidParameter(format!("support edge {e} out of range")));
    }
    let lengths: Vec<f64> = support.iter().map(|&e| mesh.boundary_edges()[e].length).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { lengths.iter().zip(a.iter().zip(b)).map(|(l, (x, y))| l * x * y).sum() };

    let mut constraints: Vec<Vec<f64>> = vec![vec![1.0; support.len()]];
    for mode in eigs.modes.iter().take(k) {
        let means = assembly::edge_product_mean(mesh, u, mode);
        constraints.push(support.iter().map(|&e| means[e]).collect());
    }
    // Orthonormal basis of the constraint span (twice-iterated Gram–Schmidt).
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in constraints {
        let scale = dot(&c, &c).sqrt();
        let mut v = c;
        for _ in 0..2 {
            for q in &basis {
                let d = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-10 * scale {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let mut v: Vec<f64> = (0..support.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let d = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 * scale {
            let mut h = vec![0.0; ne];
            for (&e, x) in support.iter().zip(v) {
                h[e] = x / n;
            }
            return Ok(BoundaryField::from_vec_unchecked(h));
        }
    }
    Err(Error::Degenerate(
        "the moment constraints leave no room on the given support".into(),
    ))
}

/// The mass-neutral low-mode perturbation h = α₁ φ₁/u + α₂ φ₂/u (edge means),
/// with α₁ = ∫ φ₂/u and α₂ = −∫ φ₁/u, scaled to unit weighted norm.
pub fn build_lowmode(mesh: &Mesh, u: &[f64], eigs: &EigPairs) -> Result<BoundaryField> {
    if eigs.count() < 3 {
        return Err(Error::InvalidParameter(
            "the low-mode perturbation needs the eigenpairs with indices 1 and 2".into(),
        ));
    }
    if u.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Hypothesis("the state must be positive to form φ/u".into()));
    }
    let ratio = |k: usize| -> BoundaryField {
        let r: Vec<f64> = eigs.modes[k].iter().zip(u).map(|(p, q)| p / q).collect();
        BoundaryField::from_vec_unchecked(assembly::edge_mean(mesh, &r))
    };
    let (r1, r2) = (ratio(1), ratio(2));
    let a1 = r2.integral(mesh);
    let a2 = -r1.integral(mesh);
    let h = r1.scaled(a1).axpy(a2, &r2);
    let norm = h.weighted_norm(mesh);
    let scale = (r1.weighted_norm(mesh) + r2.weighted_norm(mesh)) * (a1.abs() + a2.abs());
    if !(norm > 1e-14 * scale.max(f64::MIN_POSITIVE)) || a1 == 0.0 && a2 == 0.0 {
        return Err(Error::Degenerate(
            "both low-mode coefficients vanish; the perturbation is zero".into(),
        ));
    }
    Ok(h.scaled(1.0 / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::solve_robin;
    use crate::steklov::steklov_eigs;
    use crate::fields::ScalarField;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let spec = AdmissibleSpec::new(1.0, vec![1.0, 1.0]).unwrap();
        let p = spec.project(&[2.0, -1.0]).unwrap();
        assert_eq!(p.values, vec![1.0, 0.0]);
        // Any τ in [−1, 1] is optimal here; the clamped result is what matters.
        assert!(p.tau >= -1.0 && p.tau <= 1.0);

        let spec = AdmissibleSpec::new(1.5, vec![1.0; 3]).unwrap();
        let p = spec.project(&[0.9; 3]).unwrap();
        assert!(p.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!((p.tau - 0.4).abs() < 1e-15);

        let spec = AdmissibleSpec::new(0.95, vec![0.5, 1.0, 1.5]).unwrap();
        let g = [0.2, 0.4, 0.3];
        let p = spec.project(&g).unwrap();
        assert!(p.values.iter().zip(g).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn brute_force_two_variable_projection() {
        // Minimize (β₁ − g₁)² + 2(β₂ − g₂)² on β₁ + 2β₂ = 1 over a fine grid.
        let spec = AdmissibleSpec::new(1.0, vec![1.0, 2.0]).unwrap();
        let g = [0.9, 0.6];
        let p = spec.project(&g).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200000 {
            let b2 = i as f64 / 400000.0;
            let b1 = 1.0 - 2.0 * b2;
            if !(0.0..=1.0).contains(&b1) {
                continue;
            }
            let c = (b1 - g[0]).powi(2) + 2.0 * (b2 - g[1]).powi(2);
            if c < best.0 {
                best = (c, b2);
            }
        }
        assert!((p.values[1] - best.1).abs() < 1e-5);
    }

    #[test]
    fn infeasible_mass() {
        assert!(matches!(AdmissibleSpec::new(3.0, vec![1.0; 3]), Err(Error::Infeasible { .. })));
        assert!(AdmissibleSpec::new(0.0, vec![1.0; 3]).is_err());
        assert!(AdmissibleSpec::new(1.0, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn intermediate_measure_examples() {
        let l = [1.0, 1.0, 1.0];
        assert_eq!(intermediate_measure(&[0.0, 1.0, 0.0], &l, 1e-3).unwrap(), 0.0);
        assert_eq!(intermediate_measure(&[0.4; 3], &l, 1e-3).unwrap(), 3.0);
        assert_eq!(intermediate_measure(&[0.0, 0.5, 1.0], &l, 0.1).unwrap(), 1.0);
        assert!(intermediate_measure(&[0.0], &[1.0], 0.5).is_err());
        assert_eq!(zero_set_measure(&[0.0, 0.5, 1e-4], &l, 1e-3).unwrap(), 2.0);
    }

    fn fixture() -> (Mesh, Vec<f64>, EigPairs) {
        let mesh = Mesh::disk(48, 8).unwrap();
        let beta = BoundaryField::from_fn(&mesh, |e| if e < 16 { 0.9 } else { 0.3 });
        let u = solve_robin(&mesh, &beta, &ScalarField::constant(&mesh, 1.0)).unwrap();
        let eigs = steklov_eigs(&mesh, &beta, 12).unwrap();
        (mesh, u.into_values(), eigs)
    }

    #[test]
    fn highfreq_constraints_hold() {
        let (mesh, u, eigs) = fixture();
        let support: Vec<usize> = (5..30).collect();
        let k = 10;
        let h = build_highfreq(&mesh, &support, k, &eigs, &u, 7).unwrap();
        assert!((h.weighted_norm(&mesh) - 1.0).abs() < 1e-12);
        assert!(h.integral(&mesh).abs() < 1e-10);
        for mode in eigs.modes.iter().take(k) {
            let means = BoundaryField::from_vec_unchecked(assembly::edge_product_mean(&mesh, &u, mode));
            assert!(h.weighted_dot(&means, &mesh).abs() < 1e-10);
        }
        assert!((0..mesh.n_boundary_edges()).all(|e| support.contains(&e) || h[e] == 0.0));
        let h2 = build_highfreq(&mesh, &support, k, &eigs, &u, 8).unwrap();
        assert_ne!(h, h2);
        let combo = h.axpy(-2.5, &h2);
        assert!(combo.integral(&mesh).abs() < 1e-10);
    }

    #[test]
    fn highfreq_two_edge_kernel() {
        let (mesh, u, eigs) = fixture();
        let h = build_highfreq(&mesh, &[3, 4], 0, &eigs, &u, 1).unwrap();
        let l = mesh.boundary_edges()[3].length;
        let expected = 1.0 / (2.0 * l).sqrt();
        assert!((h[3].abs() - expected).abs() < 1e-12);
        assert!((h[3] + h[4]).abs() < 1e-12);
    }

    #[test]
    fn highfreq_support_too_small() {
        let (mesh, u, eigs) = fixture();
        assert!(matches!(
            build_highfreq(&mesh, &[1, 2, 3], 2, &eigs, &u, 0),
            Err(Error::SupportTooSmall { support: 3, required: 4 })
        ));
    }

    #[test]
    fn lowmode_is_mass_neutral() {
        let (mesh, u, eigs) = fixture();
        let h = build_lowmode(&mesh, &u, &eigs).unwrap();
        assert!(h.integral(&mesh).abs() < 1e-10);
        assert!((h.weighted_norm(&mesh) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn projection_kkt_and_lipschitz(
            g in proptest::collection::vec(-2.0f64..3.0, 6),
            g2 in proptest::collection::vec(-2.0f64..3.0, 6),
            w in proptest::collection::vec(0.1f64..2.0, 6),
            frac in 0.05f64..0.95,
        ) {
            let total: f64 = w.iter().sum();
            let spec = AdmissibleSpec::new(frac * total, w.clone()).unwrap();
            let p = spec.project(&g).unwrap();
            prop_assert!(spec.is_feasible(&p.values, 1e-12 * total.max(1.0)));
            for (b, v) in p.values.iter().zip(&g) {
                let t = v - p.tau;
                if *b == 0.0 {
                    prop_assert!(t <= 0.0);
                } else if *b == 1.0 {
                    prop_assert!(t >= 1.0);
                } else {
                    prop_assert!((b - t).abs() < 1e-12);
                }
            }
            let again = spec.project(&p.values).unwrap();
            prop_assert!(spec.distance(&again.values, &p.values) < 1e-12);
            let q = spec.project(&g2).unwrap();
            prop_assert!(spec.distance(&p.values, &q.values) <= spec.distance(&g, &g2) + 1e-12);
        }
    }
}
