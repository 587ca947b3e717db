use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use robinopt::config::{
    parse_batch, DomainConfig, GammaConfig, ModelConfig, ProblemConfig, ScenarioKind, VolumeConfig,
};
use robinopt::{run_scenario, CliError, ScenarioConfig};
use robinopt_core::criteria::{CriterionJ, Flavor, Sense};
use robinopt_core::optimize::OptOptions;
use robinopt_core::Mesh;

#[derive(Parser)]
#[command(name = "robinopt", version, about = "Optimization of Robin boundary coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario or a batch (a JSON array of scenarios).
    Run {
        config: PathBuf,
        /// Output directory; batch members write to DIR/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Mesh utilities.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Built-in verification scenarios.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generate a mesh and write it in the text format.
    Gen {
        #[command(subcommand)]
        shape: MeshShape,
    },
}

#[derive(Subcommand)]
enum MeshShape {
    Square {
        #[arg(long)]
        n: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Disk {
        #[arg(long)]
        boundary: usize,
        #[arg(long)]
        rings: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Square,
    Disk,
}

#[derive(Args, Clone)]
struct DomainArgs {
    #[arg(long, value_enum, default_value_t = DomainArg::Disk)]
    domain: DomainArg,
    /// Square subdivisions per side.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Disk boundary vertices.
    #[arg(long, default_value_t = 64)]
    boundary: usize,
    /// Disk rings.
    #[arg(long, default_value_t = 12)]
    rings: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl DomainArgs {
    fn domain(&self) -> DomainConfig {
        match self.domain {
            DomainArg::Square => DomainConfig::Square { n: self.n },
            DomainArg::Disk => DomainConfig::Disk {
                n_boundary: self.boundary,
                n_rings: self.rings,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Boundary,
    Distributed,
    Compliance,
    Logistic,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Adjoint gradient and second derivative against finite differences.
    Gradient {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, value_enum, default_value_t = FlavorArg::Compliance)]
        flavor: FlavorArg,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
    },
    /// Robin–Steklov eigenvalues for the uniform coefficient.
    Steklov {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// V0 as a fraction of the perimeter (β = fraction).
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
    },
    /// Closed-form compliance minimizer below the critical budget.
    ExplicitMin {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
    },
    /// First-order test of the constant coefficient (balls only).
    Serrin {
        #[command(flatten)]
        domain: DomainArgs,
    },
    /// Penalized Robin problems approaching the mixed problem.
    Alpha {
        #[command(flatten)]
        domain: DomainArgs,
    },
}

fn verify_config(name: &str, domain: &DomainArgs, problem: ProblemConfig, scenario: ScenarioKind) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        domain: domain.domain(),
        problem,
        scenario,
        seed: domain.seed,
        starts: 5,
        optimizer: OptOptions::default(),
        solver: Default::default(),
        out: Some(domain.out.join(name)),
    }
}

fn flavor_problem(flavor: FlavorArg) -> ProblemConfig {
    let base = ProblemConfig::default();
    match flavor {
        FlavorArg::Compliance => base,
        FlavorArg::Boundary | FlavorArg::Distributed => ProblemConfig {
            flavor: if matches!(flavor, FlavorArg::Boundary) {
                Flavor::Boundary
            } else {
                Flavor::Distributed
            },
            sense: Sense::Maximize,
            criterion: CriterionJ::Identity,
            ..base
        },
        FlavorArg::Logistic => ProblemConfig {
            flavor: Flavor::Distributed,
            sense: Sense::Maximize,
            criterion: CriterionJ::Identity,
            model: ModelConfig::Logistic {
                m: Default::default(),
                newton_tol: 1e-10,
                max_newton: 50,
            },
            v0: VolumeConfig::Fraction(0.1),
        },
    }
}

fn verify_scenario(check: VerifyCommand) -> ScenarioConfig {
    match check {
        VerifyCommand::Gradient { domain, flavor, pairs } => verify_config(
            "verify-gradient",
            &domain,
            flavor_problem(flavor),
            ScenarioKind::GradientCheck {
                pairs,
                eps: 1e-4,
                tolerance: 1e-4,
                second_pairs: 10,
            },
        ),
        VerifyCommand::Steklov { domain, count, fraction } => verify_config(
            "verify-steklov",
            &domain,
            ProblemConfig {
                v0: VolumeConfig::Fraction(fraction),
                ..ProblemConfig::default()
            },
            ScenarioKind::SteklovTable { count },
        ),
        VerifyCommand::ExplicitMin { domain, ratio } => verify_config(
            "verify-explicit-min",
            &domain,
            ProblemConfig::default(),
            ScenarioKind::VerifyExplicitMinimizer { v0_ratio: ratio },
        ),
        VerifyCommand::Serrin { domain } => verify_config(
            "verify-serrin",
            &domain,
            ProblemConfig::default(),
            ScenarioKind::SerrinCheck,
        ),
        VerifyCommand::Alpha { domain } => verify_config(
            "verify-alpha",
            &domain,
            ProblemConfig::default(),
            ScenarioKind::AlphaSweep {
                gamma: GammaConfig::FirstQuarter,
                alphas: robinopt_core::alpha_limit::geometric_alphas(6),
            },
        ),
    }
}

/// Runs the scenarios (in parallel up to `jobs`) and returns the exit code.
fn run_all(configs: Vec<ScenarioConfig>, out: Option<PathBuf>, jobs: usize, base: Option<&Path>) -> Result<u8, CliError> {
    let batch = configs.len() > 1;
    let mut names = HashSet::new();
    for (i, c) in configs.iter().enumerate() {
        if !names.insert(c.name.clone()) {
            return Err(CliError::config(format!("/{i}/name"), format!("duplicate scenario name {}", c.name)));
        }
    }
    let dir_for = |c: &ScenarioConfig| -> PathBuf {
        match (&out, batch) {
            (Some(o), true) => o.join(&c.name),
            (Some(o), false) => o.clone(),
            (None, _) => c.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&c.name)),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::config("/", format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<Result<robinopt::ScenarioOutcome, CliError>> =
        pool.install(|| configs.par_iter().map(|c| run_scenario(c, &dir_for(c), base)).collect());
    let mut code = 0u8;
    for (c, r) in configs.iter().zip(results) {
        match r.and_then(|o| o.into_result()) {
            Ok(o) => println!("{}: PASS {} ({})", c.name, o.summary, o.out_dir.display()),
            Err(e) => {
                let label = if matches!(e, CliError::Verification(_)) { "FAIL" } else { "ERROR" };
                println!("{}: {label} {e}", c.name);
                code = code.max(e.exit_code() as u8);
            }
        }
    }
    Ok(code)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { config, out, jobs } => {
            let text = fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let mut configs = parse_batch(&text)?;
            for c in &mut configs {
                c.apply_seed_override()?;
            }
            run_all(configs, out, jobs, config.parent())
        }
        Command::Mesh {
            command: MeshCommand::Gen { shape },
        } => {
            let (mesh, output) = match shape {
                MeshShape::Square { n, output } => (Mesh::square(n), output),
                MeshShape::Disk { boundary, rings, output } => (Mesh::disk(boundary, rings), output),
            };
            let text = mesh.map_err(|e| CliError::config("/domain", e.to_string()))?.to_text();
            match output {
                Some(path) => fs::write(&path, text).map_err(|e| CliError::io(&path, e))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Verify { check } => {
            let mut config = verify_scenario(check);
            config.apply_seed_override()?;
            run_all(vec![config], None, 1, None)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("robinopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

