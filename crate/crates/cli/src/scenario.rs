//! Runs one configured scenario and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use robinopt_core::admissible::AdmissibleSpec;
use robinopt_core::alpha_limit;
use robinopt_core::checks::{self, DerivativeCheck};
use robinopt_core::criteria::{Problem, ProblemSpec, Sense};
use robinopt_core::optimize::{self, HistoryEntry};
use robinopt_core::steklov;
use robinopt_core::state;
use robinopt_core::{BoundaryField, Mesh, ScalarField};

use crate::artifacts;
use crate::config::{CertificateConfig, ScenarioConfig, ScenarioKind};
use crate::error::{CliError, Context};
use crate::explicit;

/// Result of a completed scenario. A scenario that ran but whose checks
/// did not hold has `passed == false`.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub out_dir: PathBuf,
    pub passed: bool,
    pub summary: String,
    pub report: Value,
}

impl ScenarioOutcome {
    pub fn into_result(self) -> Result<Self, CliError> {
        if self.passed {
            Ok(self)
        } else {
            Err(CliError::Verification(format!("{}: {}", self.name, self.summary)))
        }
    }
}

/// Everything a scenario writes besides run.json.
struct Artifacts {
    report: Value,
    passed: bool,
    summary: String,
    beta: Vec<(&'static str, Vec<f64>)>,
    fields: Vec<(&'static str, Vec<f64>)>,
    history: Vec<(u64, Vec<HistoryEntry>)>,
}

impl Artifacts {
    fn new(report: Value, passed: bool, summary: String) -> Self {
        Self {
            report,
            passed,
            summary,
            beta: Vec::new(),
            fields: Vec::new(),
            history: Vec::new(),
        }
    }
}

/// Runs `config`, writing into `out_dir` (created if needed). Relative mesh
/// paths resolve against `base`.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path, base: Option<&Path>) -> Result<ScenarioOutcome, CliError> {
    config.validate()?;
    let mesh = config.domain.build(base)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let seeds = config.seeds();
    let run = json!({
        "config": config,
        "mesh": {
            "vertices": mesh.n_vertices(),
            "triangles": mesh.triangles().len(),
            "boundary_edges": mesh.n_boundary_edges(),
            "area": mesh.area(),
            "perimeter": mesh.perimeter(),
            "h": mesh.mesh_size(),
        },
        "seeds": seeds,
        "versions": {
            "robinopt": env!("CARGO_PKG_VERSION"),
            "robinopt_core": robinopt_core::VERSION,
        },
    });
    artifacts::write_json(out_dir, "run.json", &run)?;

    let name = config.name.as_str();
    let out = match &config.scenario {
        ScenarioKind::Optimize => run_optimize(config, &mesh, &seeds)?,
        ScenarioKind::VerifyExplicitMinimizer { v0_ratio } => run_explicit(config, &mesh, *v0_ratio, &seeds)?,
        ScenarioKind::SerrinCheck => run_serrin(config, &mesh)?,
        ScenarioKind::AlphaSweep { gamma, alphas } => run_alpha(config, &mesh, &gamma.edges(&mesh), alphas, out_dir)?,
        ScenarioKind::SteklovTable { count } => run_steklov(config, &mesh, *count, out_dir)?,
        ScenarioKind::GradientCheck {
            pairs,
            eps,
            tolerance,
            second_pairs,
        } => run_gradient_check(config, &mesh, *pairs, *eps, *tolerance, *second_pairs, out_dir)?,
        ScenarioKind::Certificate { certificate } => run_certificate(config, &mesh, certificate)?,
    };

    artifacts::write_json(out_dir, "report.json", &out.report)?;
    if !out.history.is_empty() {
        let runs: Vec<(u64, &[HistoryEntry])> = out.history.iter().map(|(s, h)| (*s, h.as_slice())).collect();
        artifacts::write_history(out_dir, &runs)?;
    }
    let beta: Vec<(&str, &[f64])> = out.beta.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    artifacts::write_beta(out_dir, &mesh, &beta)?;
    artifacts::write_svg(out_dir, &mesh, &beta)?;
    let fields: Vec<(&str, &[f64])> = out.fields.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    artifacts::write_fields(out_dir, &mesh, &fields)?;
    Ok(ScenarioOutcome {
        name: name.to_string(),
        out_dir: out_dir.to_path_buf(),
        passed: out.passed,
        summary: out.summary,
        report: out.report,
    })
}

fn problem_spec(config: &ScenarioConfig, mesh: &Mesh) -> Result<ProblemSpec, CliError> {
    config.problem.build(mesh)
}

/// State and adjoint at β as nodal columns.
fn state_fields(problem: &Problem<'_>, beta: &BoundaryField) -> Result<Vec<(&'static str, Vec<f64>)>, CliError> {
    let g = problem.gradient(beta).context(|| "state and adjoint".into())?;
    Ok(vec![("u", g.u.into_values()), ("p", g.p.into_values())])
}

fn run_optimize(config: &ScenarioConfig, mesh: &Mesh, seeds: &[u64]) -> Result<Artifacts, CliError> {
    let spec = problem_spec(config, mesh)?;
    let problem = Problem::new(mesh, &spec)
        .context(|| "problem setup".into())?
        .with_solver(config.solver);
    let ms = optimize::multistart(&problem, seeds, &config.optimizer).context(|| "optimization".into())?;
    let best = ms.best_run();
    let structure = optimize::kkt_residual(&problem, &best.beta_star).context(|| "optimality residual".into())?;
    let certificate = bangbang_at(&problem, &best.beta_star, 50.0, config.seed);
    let runs: Vec<Value> = ms
        .runs
        .iter()
        .zip(seeds)
        .map(|(r, s)| {
            json!({
                "seed": s,
                "value": r.value,
                "termination": r.termination,
                "iterations": r.history.len() - 1,
                "pg_norm": r.pg_norm,
                "lambda": r.lambda,
            })
        })
        .collect();
    let report = json!({
        "kind": "optimize",
        "best_run": ms.best,
        "value": best.value,
        "runs": runs,
        "structure": structure,
        "certificate": certificate,
    });
    let summary = format!(
        "best value {:.10} ({:?}), intermediate fraction {:.4}",
        best.value, best.termination, structure.intermediate_fraction
    );
    let mut out = Artifacts::new(report, true, summary);
    out.fields = state_fields(&problem, &best.beta_star)?;
    out.beta = vec![("beta", best.beta_star.to_vec())];
    out.history = ms
        .runs
        .iter()
        .zip(seeds)
        .map(|(r, s)| (*s, r.history.clone()))
        .collect();
    Ok(out)
}

/// The high-frequency certificate on the intermediate set of β, or the
/// reason it does not apply.
fn bangbang_at(problem: &Problem<'_>, beta: &BoundaryField, sigma_min: f64, seed: u64) -> Value {
    let attempt = optimize::cutoff_for_sigma(problem.mesh, beta, sigma_min)
        .and_then(|k| optimize::bangbang_certificate(problem, beta, k, seed));
    match attempt {
        Ok(c) => json!(c),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

fn run_explicit(config: &ScenarioConfig, mesh: &Mesh, ratio: f64, seeds: &[u64]) -> Result<Artifacts, CliError> {
    let f = config
        .problem
        .source()
        .ok_or_else(|| CliError::config("/problem/model", "the explicit minimizer needs the linear model"))?
        .build(mesh);
    let r = explicit::verify_explicit_minimizer(mesh, &f, ratio, seeds, &config.optimizer, config.solver)
        .context(|| "explicit minimizer".into())?;
    let summary = format!(
        "state error {:.3e}, optimizer distance {:.3e} (tolerance {:.3e})",
        r.state_error,
        r.optimizer_distances.iter().copied().fold(0.0, f64::max),
        r.distance_tolerance
    );
    let mut out = Artifacts::new(json!({ "kind": "verify_explicit_minimizer", "explicit": r }), r.passed, summary);
    out.beta = vec![
        ("beta_formula", r.beta_formula.to_vec()),
        ("beta_optimized", r.beta_optimized.to_vec()),
    ];
    out.fields = vec![("u", r.u.to_vec())];
    out.history = vec![(seeds[0], r.history.clone())];
    Ok(out)
}

fn run_serrin(config: &ScenarioConfig, mesh: &Mesh) -> Result<Artifacts, CliError> {
    if !config.problem.source().is_some_and(|f| f.is_constant_one()) {
        return Err(CliError::config("/problem/model", "the ball test uses f ≡ 1"));
    }
    let v0 = config.problem.v0.resolve(mesh);
    let r = explicit::serrin_check(mesh, v0).context(|| "ball test".into())?;
    let summary = format!(
        "residual {:.3e} vs threshold {:.3e}: {}",
        r.residual,
        r.threshold,
        if r.is_ball { "ball" } else { "not a ball" }
    );
    let spec = ProblemSpec::compliance(Sense::Minimize, ScalarField::constant(mesh, 1.0), v0);
    let problem = Problem::new(mesh, &spec).context(|| "problem setup".into())?;
    let beta = BoundaryField::constant(mesh, v0 / mesh.perimeter());
    let g = problem.gradient(&beta).context(|| "switch function".into())?;
    let mut out = Artifacts::new(json!({ "kind": "serrin_check", "serrin": r }), true, summary);
    out.beta = vec![("beta", beta.to_vec()), ("phi", g.phi.to_vec())];
    out.fields = vec![("u", g.u.to_vec())];
    Ok(out)
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    l2_error: f64,
    h1_error: f64,
    energy: f64,
    trace_sq: f64,
}

fn run_alpha(
    config: &ScenarioConfig,
    mesh: &Mesh,
    gamma: &[usize],
    alphas: &[f64],
    out_dir: &Path,
) -> Result<Artifacts, CliError> {
    let f = config
        .problem
        .source()
        .ok_or_else(|| CliError::config("/problem/model", "the α sweep needs the linear model"))?
        .build(mesh);
    let sweep = alpha_limit::alpha_sweep(mesh, gamma, &f, alphas).context(|| "α sweep".into())?;
    let rows: Vec<AlphaRow> = sweep
        .entries
        .iter()
        .map(|e| AlphaRow {
            alpha: e.alpha,
            l2_error: e.l2_error,
            h1_error: e.h1_error,
            energy: e.energy,
            trace_sq: e.trace_sq,
        })
        .collect();
    artifacts::write_csv(out_dir, "alpha.csv", &rows)?;
    let e = &sweep.entries;
    let decreasing = e.windows(2).all(|w| w[1].l2_error < w[0].l2_error);
    let trace_decreasing = e.windows(2).all(|w| w[1].trace_sq < w[0].trace_sq);
    let energy_monotone = e.windows(2).all(|w| w[1].energy >= w[0].energy - 1e-12 * w[0].energy.abs().max(1.0));
    let energy_bounded = e.iter().all(|x| x.energy <= sweep.limit_energy + 1e-12 * sweep.limit_energy.abs().max(1.0));
    let passed = decreasing && trace_decreasing && energy_monotone && energy_bounded;
    let last = e.last().expect("nonempty sweep");
    let summary = format!(
        "e(α_max)/‖v‖ = {:.3e}, observed rate {:.2}",
        last.l2_error / sweep.limit_norm,
        sweep.observed_rate().unwrap_or(f64::NAN)
    );
    let report = json!({
        "kind": "alpha_sweep",
        "sweep": sweep,
        "observed_rate": sweep.observed_rate(),
        "error_decreasing": decreasing,
        "trace_decreasing": trace_decreasing,
        "energy_nondecreasing": energy_monotone,
        "energy_bounded_by_limit": energy_bounded,
    });
    let mut out = Artifacts::new(report, passed, summary);
    out.beta = vec![("gamma", BoundaryField::indicator(mesh, gamma).to_vec())];
    let u_last = {
        let beta = BoundaryField::indicator(mesh, gamma).scaled(last.alpha);
        state::solve_robin(mesh, &beta, &f).context(|| "penalized state".into())?
    };
    out.fields = vec![("v_limit", sweep.limit.to_vec()), ("u_alpha_max", u_last.into_values())];
    Ok(out)
}

#[derive(Serialize)]
struct SteklovRow {
    k: usize,
    sigma: f64,
}

fn run_steklov(config: &ScenarioConfig, mesh: &Mesh, count: usize, out_dir: &Path) -> Result<Artifacts, CliError> {
    let v0 = config.problem.v0.resolve(mesh);
    let beta = BoundaryField::constant(mesh, v0 / mesh.perimeter());
    let eigs = steklov::steklov_eigs(mesh, &beta, count).context(|| "Steklov eigenpairs".into())?;
    let rows: Vec<SteklovRow> = eigs.sigmas.iter().enumerate().map(|(k, &sigma)| SteklovRow { k, sigma }).collect();
    artifacts::write_csv(out_dir, "steklov.csv", &rows)?;
    let ortho = eigs.orthonormality_error();
    let passed = ortho <= 1e-8 && eigs.max_residual <= 1e-10;
    let summary = format!(
        "{} pairs, orthonormality error {:.1e}, residual {:.1e}",
        eigs.count(),
        ortho,
        eigs.max_residual
    );
    let report = json!({
        "kind": "steklov_table",
        "beta": v0 / mesh.perimeter(),
        "sigmas": eigs.sigmas,
        "orthonormality_error": ortho,
        "max_residual": eigs.max_residual,
    });
    let mut out = Artifacts::new(report, passed, summary);
    out.beta = vec![("beta", beta.to_vec())];
    out.fields = eigs
        .modes
        .iter()
        .take(4)
        .enumerate()
        .map(|(k, m)| (["mode0", "mode1", "mode2", "mode3"][k], m.to_vec()))
        .collect();
    Ok(out)
}

fn run_gradient_check(
    config: &ScenarioConfig,
    mesh: &Mesh,
    pairs: usize,
    eps: f64,
    tolerance: f64,
    second_pairs: usize,
    out_dir: &Path,
) -> Result<Artifacts, CliError> {
    let spec = problem_spec(config, mesh)?;
    let problem = Problem::new(mesh, &spec)
        .context(|| "problem setup".into())?
        .with_solver(config.solver);
    let first = checks::gradient_check(&problem, pairs, config.seed, eps).context(|| "gradient check".into())?;
    artifacts::write_csv(out_dir, "gradient.csv", &first)?;
    let worst = |c: &[DerivativeCheck]| c.iter().map(|x| x.relative_error).fold(0.0, f64::max);
    let mut passed = worst(&first) <= tolerance;
    let mut report = json!({
        "kind": "gradient_check",
        "pairs": pairs,
        "eps": eps,
        "tolerance": tolerance,
        "max_relative_error": worst(&first),
    });
    if second_pairs > 0 {
        let second = checks::second_derivative_check(&problem, second_pairs, config.seed, 1e-3)
            .context(|| "second-derivative check".into())?;
        artifacts::write_csv(out_dir, "second_derivative.csv", &second)?;
        passed &= worst(&second) <= 1e-2;
        report["second_order"] = json!({ "pairs": second_pairs, "eps": 1e-3, "tolerance": 1e-2, "max_relative_error": worst(&second) });
    }
    let summary = format!("max relative error {:.2e} (tolerance {:.1e})", worst(&first), tolerance);
    let beta = BoundaryField::new(mesh, AdmissibleSpec::for_mesh(mesh, spec.v0).context(|| "budget".into())?.uniform())
        .context(|| "uniform coefficient".into())?;
    let mut out = Artifacts::new(report, passed, summary);
    out.fields = state_fields(&problem, &beta)?;
    out.beta = vec![("beta", beta.to_vec())];
    Ok(out)
}

fn run_certificate(config: &ScenarioConfig, mesh: &Mesh, which: &CertificateConfig) -> Result<Artifacts, CliError> {
    let v0 = config.problem.v0.resolve(mesh);
    match *which {
        CertificateConfig::BangBang { sigma_min } => {
            let spec = problem_spec(config, mesh)?;
            let problem = Problem::new(mesh, &spec).context(|| "problem setup".into())?;
            let beta = BoundaryField::constant(mesh, v0 / mesh.perimeter());
            let k = optimize::cutoff_for_sigma(mesh, &beta, sigma_min).context(|| "cutoff".into())?;
            let c = optimize::bangbang_certificate(&problem, &beta, k, config.seed)
                .context(|| "high-frequency certificate".into())?;
            let passed = c.ddot_j * spec.sense.sign() > 0.0;
            let summary = format!("K = {k}, σ_K = {:.2}, J̈ = {:.4e}", c.sigma_k, c.ddot_j);
            let mut out = Artifacts::new(json!({ "kind": "bang_bang", "certificate": c }), passed, summary);
            out.beta = vec![("beta", beta.to_vec()), ("h", c.h.to_vec())];
            out.fields = state_fields(&problem, &beta)?;
            Ok(out)
        }
        CertificateConfig::Relaxation { c_factor, u0_samples } => {
            let f = config
                .problem
                .source()
                .ok_or_else(|| CliError::config("/problem/model", "the relaxation test needs the linear model"))?
                .build(mesh);
            let beta = BoundaryField::new(mesh, optimize::arc_indicator(mesh, 0, v0)).context(|| "arc".into())?;
            let u0 = optimize::estimate_u0(mesh, &f, v0, u0_samples, config.seed).context(|| "U₀ estimate".into())?;
            let c = optimize::relaxation_certificate(mesh, &beta, &f, u0, c_factor)
                .context(|| "low-mode certificate".into())?;
            let passed = c.ddot_j < 0.0;
            let summary = format!(
                "K = {:.4}, Λ₂ = {:.4}, C = {:.4}, J̈ = {:.4e}, window {}",
                c.k_const,
                c.lambda2,
                c.c,
                c.ddot_j,
                if c.window_ok { "holds" } else { "does not hold" }
            );
            // The concave criterion is outside its validity window here, so
            // only the state is exported.
            let u = state::solve_robin(mesh, &beta, &f).context(|| "state".into())?;
            let mut out = Artifacts::new(json!({ "kind": "relaxation", "certificate": c }), passed, summary);
            out.beta = vec![("beta", beta.to_vec()), ("h", c.h.to_vec())];
            out.fields = vec![("u", u.into_values())];
            Ok(out)
        }
    }
}
