//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use robinopt::config::ScenarioConfig;
use robinopt::explicit::{serrin_check, verify_explicit_minimizer};
use robinopt::run_scenario;
use robinopt_core::admissible;
use robinopt_core::alpha_limit::{alpha_sweep, geometric_alphas};
use robinopt_core::assembly::Operators;
use robinopt_core::checks::{gradient_check, random_direction, second_derivative_check, seeded_betas};
use robinopt_core::criteria::{CriterionJ, Flavor, Problem, ProblemSpec, Sense};
use robinopt_core::optimize::{self, OptOptions};
use robinopt_core::sparse::SolverKind;
use robinopt_core::state::{self, LogisticData};
use robinopt_core::steklov::steklov_eigs;
use robinopt_core::{BoundaryField, Mesh, ScalarField};

type Outcome = Result<(bool, String), Box<dyn std::error::Error + Send + Sync>>;
type Criterion = (&'static str, fn() -> Outcome);

fn ones(mesh: &Mesh) -> ScalarField {
    ScalarField::constant(mesh, 1.0)
}

fn derivative_meshes() -> Vec<(&'static str, Mesh)> {
    vec![
        ("square(16)", Mesh::square(16).unwrap()),
        ("disk(64,16)", Mesh::disk(64, 16).unwrap()),
    ]
}

/// The five criteria checked for derivative consistency.
fn flavors(mesh: &Mesh) -> Vec<(&'static str, ProblemSpec)> {
    let v0 = 0.4 * mesh.perimeter();
    let f = ones(mesh);
    let lin = |flavor, j| ProblemSpec::linear(flavor, Sense::Maximize, j, f.clone(), v0);
    vec![
        ("boundary", lin(Flavor::Boundary, CriterionJ::Identity)),
        ("boundary-power2", lin(Flavor::Boundary, CriterionJ::power(2.0).unwrap())),
        ("distributed", lin(Flavor::Distributed, CriterionJ::Identity)),
        ("compliance", ProblemSpec::compliance(Sense::Minimize, f.clone(), v0)),
        (
            "logistic",
            ProblemSpec::logistic(
                Flavor::Distributed,
                Sense::Maximize,
                CriterionJ::Identity,
                LogisticData::new(ones(mesh)),
                0.1 * mesh.perimeter(),
            ),
        ),
    ]
}

/// Worst relative error over every (mesh, flavor) case, with its label.
fn derivative_sweep(second: bool) -> Outcome {
    let meshes = derivative_meshes();
    let cases: Vec<(String, &Mesh, ProblemSpec)> = meshes
        .iter()
        .flat_map(|(name, mesh)| {
            flavors(mesh)
                .into_iter()
                .map(move |(fl, spec)| (format!("{fl}@{name}"), mesh, spec))
        })
        .collect();
    let worst: Vec<(String, f64)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (label, mesh, spec))| {
            let problem = Problem::new(mesh, spec)?;
            let seed = 100 + i as u64;
            let checks = if second {
                second_derivative_check(&problem, 10, seed, 1e-3)?
            } else {
                gradient_check(&problem, 20, seed, 1e-4)?
            };
            let max = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
            Ok((label.clone(), max))
        })
        .collect::<Result<_, robinopt_core::Error>>()?;
    let tol = if second { 1e-2 } else { 1e-4 };
    let (label, max) = worst
        .iter()
        .cloned()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or_default();
    Ok((
        worst.iter().all(|(_, e)| *e <= tol),
        format!("{} cases, worst relative error {max:.2e} ({label}) vs {tol:.0e}", worst.len()),
    ))
}

fn gradient_consistency() -> Outcome {
    derivative_sweep(false)
}

fn second_derivative_consistency() -> Outcome {
    derivative_sweep(true)
}

fn radial_oracles() -> Outcome {
    // u = (1 − r²)/4 + 1/2 solves −Δu = 1 with ∂_ν u + u = 0 on the unit circle,
    // so u(0) = 3/4, u = 1/2 on the boundary and ∫u = π/8 + π/2.
    let exact_center = 0.75;
    let exact_trace = 0.5;
    let exact_compliance = 0.625 * PI;

    let mesh = Mesh::disk(256, 32)?;
    let beta = BoundaryField::constant(&mesh, 1.0);
    // β ≡ 1 saturates the box, so the state is solved directly rather than
    // through an admissible-class problem.
    let f = ones(&mesh);
    let u = state::solve_robin(&mesh, &beta, &f)?;
    let center = mesh
        .vertices()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1[0].hypot(a.1[1])).total_cmp(&b.1[0].hypot(b.1[1])))
        .map(|(i, _)| i)
        .unwrap();
    let center_err = (u[center] - exact_center).abs();
    let trace_err = mesh
        .boundary_vertices()
        .iter()
        .map(|&v| (u[v] - exact_trace).abs())
        .fold(0.0, f64::max);
    let compliance: f64 = Operators::new(&mesh).mass.bilinear(&f, &u);
    let compliance_err = (compliance - exact_compliance).abs();
    Ok((
        center_err <= 5e-3 && trace_err <= 5e-3 && compliance_err <= 1e-2,
        format!("center {center_err:.2e}, trace {trace_err:.2e}, compliance {compliance_err:.2e}"),
    ))
}

fn steklov_spectrum() -> Outcome {
    // r^k cos kθ and r^k sin kθ are harmonic with ∂_r = k on the unit circle,
    // so σ = k + β, each k ≥ 1 twice.
    let beta_value = 0.5;
    let exact: Vec<f64> = (0..5).map(|i| beta_value + ((i + 1) / 2) as f64).collect();

    let mesh = Mesh::disk(128, 24)?;
    let eigs = steklov_eigs(&mesh, &BoundaryField::constant(&mesh, beta_value), 5)?;
    let err = eigs
        .sigmas
        .iter()
        .zip(&exact)
        .map(|(s, e)| (s - e).abs())
        .fold(0.0, f64::max);
    let ortho = eigs.orthonormality_error();
    Ok((
        err <= 3e-2 && ortho <= 1e-8,
        format!("sigma error {err:.2e}, orthonormality {ortho:.2e}"),
    ))
}

fn explicit_minimizer() -> Outcome {
    let seeds: Vec<u64> = (1..=5).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, mesh) in [("square(24)", Mesh::square(24)?), ("disk(96,20)", Mesh::disk(96, 20)?)] {
        let r = verify_explicit_minimizer(
            &mesh,
            &ones(&mesh),
            0.5,
            &seeds,
            &OptOptions::default(),
            SolverKind::default(),
        )?;
        let dist = r.optimizer_distances.iter().copied().fold(0.0, f64::max);
        let tol = 5.0 * r.h;
        ok &= dist <= tol && r.state_error <= tol;
        detail.push(format!(
            "{name}: distance {dist:.2e}, state {:.2e}, 5h {tol:.2e}",
            r.state_error
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn serrin_discrimination() -> Outcome {
    // 64 boundary edges on both domains.
    let disk = Mesh::disk(64, 12)?;
    let square = Mesh::square(16)?;
    let d = serrin_check(&disk, 0.4 * disk.perimeter())?;
    let s = serrin_check(&square, 0.4 * square.perimeter())?;
    let ratio = d.residual / s.residual;
    Ok((
        ratio <= 0.1 && d.is_ball && !s.is_ball,
        format!(
            "disk {:.2e}, square {:.2e}, ratio {ratio:.2e}; verdicts {} / {}",
            d.residual,
            s.residual,
            if d.is_ball { "ball" } else { "not a ball" },
            if s.is_ball { "ball" } else { "not a ball" }
        ),
    ))
}

fn structure_mesh() -> Mesh {
    Mesh::disk(128, 16).unwrap()
}

fn bang_bang_structure() -> Outcome {
    let mesh = structure_mesh();
    let v0 = 0.3 * mesh.perimeter();
    let f = ones(&mesh);
    let lin = |flavor| ProblemSpec::linear(flavor, Sense::Maximize, CriterionJ::Identity, f.clone(), v0);
    let specs = [
        ("boundary", lin(Flavor::Boundary)),
        ("distributed", lin(Flavor::Distributed)),
        ("compliance", ProblemSpec::compliance(Sense::Maximize, f.clone(), v0)),
        (
            "logistic",
            ProblemSpec::logistic(Flavor::Distributed, Sense::Maximize, CriterionJ::Identity, LogisticData::new(ones(&mesh)), v0),
        ),
    ];
    let seeds: Vec<u64> = (1..=5).collect();
    let constant = BoundaryField::constant(&mesh, v0 / mesh.perimeter());
    let k = optimize::cutoff_for_sigma(&mesh, &constant, 50.0)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, spec) in &specs {
        let problem = Problem::new(&mesh, spec)?;
        let ms = optimize::multistart(&problem, &seeds, &OptOptions::default())?;
        let mut worst = 0.0f64;
        for run in &ms.runs {
            worst = worst.max(optimize::kkt_residual(&problem, &run.beta_star)?.intermediate_fraction);
        }
        let cert = optimize::bangbang_certificate(&problem, &constant, k, 7)?;
        ok &= worst <= 0.02 && cert.ddot_j > 0.0 && cert.sigma_k >= 50.0;
        detail.push(format!("{name}: intermediate {:.1}%, ddotJ {:.2e}", 100.0 * worst, cert.ddot_j));
    }
    let sigma_k = steklov_eigs(&mesh, &constant, k + 1)?.sigmas[k];
    Ok((ok, format!("K {k} (sigma_K {sigma_k:.1}); {}", detail.join("; "))))
}

fn relaxation_structure() -> Outcome {
    let mesh = structure_mesh();
    let perimeter = mesh.perimeter();
    let v0 = 0.3 * perimeter;
    let f = ones(&mesh);
    let seeds: Vec<u64> = (1..=5).collect();
    let lengths = mesh.edge_lengths();
    let mut ok = true;
    let mut detail = Vec::new();
    for flavor in [Flavor::Boundary, Flavor::Distributed] {
        let spec = ProblemSpec::linear(flavor, Sense::Minimize, CriterionJ::Identity, f.clone(), v0);
        let problem = Problem::new(&mesh, &spec)?;
        let ms = optimize::multistart(&problem, &seeds, &OptOptions::default())?;
        let mut min_inter = f64::INFINITY;
        let mut max_zero = 0.0f64;
        for run in &ms.runs {
            let inter = admissible::intermediate_measure(&run.beta_star, &lengths, 1e-3)? / perimeter;
            let zero = admissible::zero_set_measure(&run.beta_star, &lengths, 1e-3)? / perimeter;
            min_inter = min_inter.min(inter);
            max_zero = max_zero.max(zero);
        }
        ok &= min_inter >= 0.10 && max_zero <= 0.02;
        detail.push(format!(
            "{flavor:?}: intermediate >= {:.1}%, zero set <= {:.1}%",
            100.0 * min_inter,
            100.0 * max_zero.abs()
        ));
    }
    let half = 0.5 * perimeter;
    let beta = BoundaryField::new(&mesh, optimize::arc_indicator(&mesh, 0, half))?;
    let u0 = optimize::estimate_u0(&mesh, &f, half, 8, 11)?;
    let cert = optimize::relaxation_certificate(&mesh, &beta, &f, u0, 2.0)?;
    ok &= cert.ddot_j < 0.0 && cert.c > cert.lambda2 * cert.k_const;
    detail.push(format!(
        "certificate ddotJ {:.2e} with C {:.2} > Lambda2*K {:.2}",
        cert.ddot_j,
        cert.c,
        cert.lambda2 * cert.k_const
    ));
    Ok((ok, detail.join("; ")))
}

fn compliance_convexity() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut min_ddot = f64::INFINITY;
    for (_, mesh) in derivative_meshes() {
        let v0 = 0.4 * mesh.perimeter();
        let spec = ProblemSpec::compliance(Sense::Minimize, ones(&mesh), v0);
        let problem = Problem::new(&mesh, &spec)?;
        let a = seeded_betas(&mesh, v0, 50, 21)?;
        let b = seeded_betas(&mesh, v0, 50, 22)?;
        for (x, y) in a.iter().zip(&b) {
            let mid = x.axpy(1.0, y).scaled(0.5);
            let gap = problem.objective(&mid)? - 0.5 * (problem.objective(x)? + problem.objective(y)?);
            worst_gap = worst_gap.max(gap);
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(23);
        for x in &a {
            let h = random_direction(&mesh, &mut rng);
            min_ddot = min_ddot.min(problem.second_derivative(x, &h)?);
        }
    }
    Ok((
        worst_gap <= 1e-10 && min_ddot > 0.0,
        format!("max midpoint gap {worst_gap:.2e}, min second derivative {min_ddot:.2e}"),
    ))
}

fn alpha_limit() -> Outcome {
    let n = 24;
    let mesh = Mesh::square(n)?;
    // The first n boundary edges form the bottom side.
    let gamma: Vec<usize> = (0..n).collect();
    let sweep = alpha_sweep(&mesh, &gamma, &ones(&mesh), &geometric_alphas(6))?;
    let e = &sweep.entries;
    let decreasing = e.windows(2).all(|w| w[1].l2_error < w[0].l2_error);
    let trace_decreasing = e.windows(2).all(|w| w[1].trace_sq < w[0].trace_sq);
    let last = e.last().unwrap();
    let rel = last.l2_error / sweep.limit_norm;
    let trace_ratio = last.trace_sq / e[0].trace_sq;
    Ok((
        decreasing && trace_decreasing && rel <= 0.02 && trace_ratio <= 1e-3,
        format!(
            "alpha {}..{}: e/|v| {rel:.2e}, trace ratio {trace_ratio:.2e}, rate {:.2}",
            e[0].alpha,
            last.alpha,
            sweep.observed_rate().unwrap_or(f64::NAN)
        ),
    ))
}

fn coercivity_positivity() -> Outcome {
    let mut min_eig = f64::INFINITY;
    let mut min_u = f64::INFINITY;
    for (_, mesh) in derivative_meshes() {
        let ops = Operators::new(&mesh);
        for beta in seeded_betas(&mesh, 0.4 * mesh.perimeter(), 20, 31)? {
            let a = ops.robin_matrix(&mesh, &beta);
            min_eig = min_eig.min(a.to_dense().symmetric_eigen().eigenvalues.min());
            min_u = min_u.min(state::solve_robin(&mesh, &beta, &ones(&mesh))?.min());
        }
    }
    Ok((
        min_eig > 0.0 && min_u > 0.0,
        format!("smallest eigenvalue {min_eig:.2e}, smallest state value {min_u:.2e}"),
    ))
}

fn csv_files(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path)?);
        }
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let configs = [
        r#"{"name": "opt", "domain": {"type": "disk", "n_boundary": 32, "n_rings": 4},
            "problem": {"flavor": "boundary", "sense": "maximize", "v0": {"fraction": 0.3}},
            "scenario": {"kind": "optimize"}, "starts": 3, "seed": 5}"#,
        r#"{"name": "grad", "domain": {"type": "square", "n": 8},
            "scenario": {"kind": "gradient_check", "pairs": 5, "second_pairs": 3}, "seed": 9}"#,
        r#"{"name": "alpha", "domain": {"type": "square", "n": 8},
            "scenario": {"kind": "alpha_sweep"}}"#,
    ];
    let tmp = tempfile::tempdir()?;
    let mut compared = 0;
    let mut ok = true;
    for text in configs {
        let config = ScenarioConfig::from_json(text)?;
        let a = tmp.path().join(format!("{}-a", config.name));
        let b = tmp.path().join(format!("{}-b", config.name));
        run_scenario(&config, &a, None)?;
        run_scenario(&config, &b, None)?;
        let (fa, fb) = (csv_files(&a)?, csv_files(&b)?);
        ok &= !fa.is_empty() && fa == fb;
        compared += fa.len();
    }
    Ok((ok, format!("{compared} CSV files identical across reruns")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("gradient consistency", gradient_consistency),
        ("second-derivative consistency", second_derivative_consistency),
        ("radial oracles", radial_oracles),
        ("Steklov spectrum", steklov_spectrum),
        ("explicit minimizer", explicit_minimizer),
        ("Serrin discrimination", serrin_discrimination),
        ("bang-bang structure", bang_bang_structure),
        ("relaxation structure", relaxation_structure),
        ("compliance convexity", compliance_convexity),
        ("alpha limit", alpha_limit),
        ("coercivity and positivity", coercivity_positivity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!(
            "acceptance {:>2} {name}: {} ({detail}) [{secs:.1} s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
