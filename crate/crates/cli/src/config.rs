//! Scenario configuration files (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use robinopt_core::criteria::{CriterionJ, Flavor, ProblemSpec, Sense};
use robinopt_core::optimize::OptOptions;
use robinopt_core::sparse::SolverKind;
use robinopt_core::state::LogisticData;
use robinopt_core::{Mesh, ScalarField};

use crate::error::CliError;

/// Environment variable that replaces the configured base seed.
pub const SEED_ENV: &str = "ROBINOPT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub domain: DomainConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    pub scenario: ScenarioKind,
    /// Base seed; run i of a multistart uses seed + i.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub optimizer: OptOptions,
    #[serde(default)]
    pub solver: SolverKind,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_seed() -> u64 {
    1
}

fn default_starts() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Square { n: usize },
    Disk { n_boundary: usize, n_rings: usize },
    Ellipse { n_boundary: usize, n_rings: usize, a: f64, b: f64 },
    MeshFile { path: PathBuf },
}

impl DomainConfig {
    /// Relative mesh paths resolve against `base`, normally the config's directory.
    pub fn build(&self, base: Option<&Path>) -> Result<Mesh, CliError> {
        let mesh = match self {
            DomainConfig::Square { n } => Mesh::square(*n),
            DomainConfig::Disk { n_boundary, n_rings } => Mesh::disk(*n_boundary, *n_rings),
            DomainConfig::Ellipse { n_boundary, n_rings, a, b } => Mesh::ellipse(*n_boundary, *n_rings, *a, *b),
            DomainConfig::MeshFile { path } => {
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                Mesh::parse(&text)
            }
        };
        mesh.map_err(|e| CliError::config("/domain", e.to_string()))
    }
}

/// A nodal field given by a formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant { value: f64 },
    /// c + x·X + y·Y
    Affine { c: f64, x: f64, y: f64 },
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::Constant { value: 1.0 }
    }
}

impl FieldConfig {
    pub fn build(&self, mesh: &Mesh) -> ScalarField {
        match *self {
            FieldConfig::Constant { value } => ScalarField::constant(mesh, value),
            FieldConfig::Affine { c, x, y } => ScalarField::from_point_fn(mesh, |p| c + x * p[0] + y * p[1]),
        }
    }

    pub fn is_constant_one(&self) -> bool {
        *self == FieldConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Linear {
        #[serde(default)]
        f: FieldConfig,
    },
    Logistic {
        #[serde(default)]
        m: FieldConfig,
        #[serde(default = "default_newton_tol")]
        newton_tol: f64,
        #[serde(default = "default_max_newton")]
        max_newton: usize,
    },
}

fn default_newton_tol() -> f64 {
    1e-10
}

fn default_max_newton() -> usize {
    50
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Linear { f: FieldConfig::default() }
    }
}

/// The boundary budget V0, absolute or as a fraction of the perimeter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VolumeConfig {
    Absolute(f64),
    Fraction(f64),
}

impl Default for VolumeConfig {
    fn default() -> Self {
        VolumeConfig::Fraction(0.4)
    }
}

impl VolumeConfig {
    pub fn resolve(self, mesh: &Mesh) -> f64 {
        match self {
            VolumeConfig::Absolute(v) => v,
            VolumeConfig::Fraction(t) => t * mesh.perimeter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub flavor: Flavor,
    pub sense: Sense,
    pub criterion: CriterionJ,
    pub model: ModelConfig,
    pub v0: VolumeConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::Compliance,
            sense: Sense::Minimize,
            criterion: CriterionJ::Identity,
            model: ModelConfig::default(),
            v0: VolumeConfig::default(),
        }
    }
}

impl ProblemConfig {
    pub fn build(&self, mesh: &Mesh) -> Result<ProblemSpec, CliError> {
        let v0 = self.v0.resolve(mesh);
        let spec = match &self.model {
            ModelConfig::Linear { f } => ProblemSpec::linear(self.flavor, self.sense, self.criterion, f.build(mesh), v0),
            ModelConfig::Logistic { m, newton_tol, max_newton } => {
                let data = LogisticData {
                    m: m.build(mesh),
                    newton_tol: *newton_tol,
                    max_newton: *max_newton,
                };
                ProblemSpec::logistic(self.flavor, self.sense, self.criterion, data, v0)
            }
        };
        spec.validate(mesh).map_err(|e| CliError::config("/problem", e.to_string()))?;
        Ok(spec)
    }

    /// The linear source, if the model is linear.
    pub fn source(&self) -> Option<&FieldConfig> {
        match &self.model {
            ModelConfig::Linear { f } => Some(f),
            ModelConfig::Logistic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    Optimize,
    VerifyExplicitMinimizer {
        /// V0 as a fraction of the critical budget V0^Ω.
        #[serde(default = "default_ratio")]
        v0_ratio: f64,
    },
    SerrinCheck,
    AlphaSweep {
        #[serde(default)]
        gamma: GammaConfig,
        #[serde(default = "default_alphas")]
        alphas: Vec<f64>,
    },
    SteklovTable {
        #[serde(default = "default_modes")]
        count: usize,
    },
    GradientCheck {
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "default_fd_eps")]
        eps: f64,
        #[serde(default = "default_fd_tol")]
        tolerance: f64,
        /// Second-difference pairs checked in addition (0 disables).
        #[serde(default = "default_second_pairs")]
        second_pairs: usize,
    },
    Certificate {
        certificate: CertificateConfig,
    },
}

fn default_ratio() -> f64 {
    0.5
}

fn default_alphas() -> Vec<f64> {
    robinopt_core::alpha_limit::geometric_alphas(6)
}

fn default_modes() -> usize {
    8
}

fn default_pairs() -> usize {
    20
}

fn default_fd_eps() -> f64 {
    1e-4
}

fn default_fd_tol() -> f64 {
    1e-4
}

fn default_second_pairs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateConfig {
    /// High-frequency test at the uniform coefficient, with the cutoff K
    /// chosen as the first index where σ_K reaches `sigma_min`.
    BangBang {
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
    },
    /// Low-mode test at the indicator of a boundary arc of length V0,
    /// for the concave quadratic with C = c_factor·Λ₂·K.
    Relaxation {
        #[serde(default = "default_c_factor")]
        c_factor: f64,
        #[serde(default = "default_u0_samples")]
        u0_samples: usize,
    },
}

fn default_sigma_min() -> f64 {
    50.0
}

fn default_c_factor() -> f64 {
    2.0
}

fn default_u0_samples() -> usize {
    8
}

/// The Dirichlet part Γ of the α-limit problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaConfig {
    /// The first quarter of the boundary edges (the bottom side of a square).
    #[default]
    FirstQuarter,
    All,
    Edges(Vec<usize>),
}

impl GammaConfig {
    pub fn edges(&self, mesh: &Mesh) -> Vec<usize> {
        let ne = mesh.n_boundary_edges();
        match self {
            GammaConfig::FirstQuarter => (0..ne / 4).collect(),
            GammaConfig::All => (0..ne).collect(),
            GammaConfig::Edges(e) => e.clone(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        parse_located(text)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.starts as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Applies `ROBINOPT_SEED` when set.
    pub fn apply_seed_override(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::config("/seed", format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Checks that do not need a mesh.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::config("/name", "must be a nonempty plain file name"));
        }
        if self.starts == 0 {
            return Err(CliError::config("/starts", "at least one start is needed"));
        }
        match self.problem.v0 {
            VolumeConfig::Fraction(t) if !(t > 0.0 && t < 1.0) => {
                return Err(CliError::config("/problem/v0/fraction", "must lie in (0, 1)"));
            }
            VolumeConfig::Absolute(v) if !(v > 0.0) => {
                return Err(CliError::config("/problem/v0/absolute", "must be positive"));
            }
            _ => {}
        }
        match &self.scenario {
            ScenarioKind::VerifyExplicitMinimizer { v0_ratio } if !(*v0_ratio > 0.0 && *v0_ratio < 1.0) => {
                Err(CliError::config("/scenario/v0_ratio", "must lie in (0, 1)"))
            }
            ScenarioKind::GradientCheck { pairs: 0, .. } => Err(CliError::config("/scenario/pairs", "must be positive")),
            ScenarioKind::SteklovTable { count: 0 } => Err(CliError::config("/scenario/count", "must be positive")),
            _ => Ok(()),
        }
    }
}

/// A batch file is either one scenario or an array of scenarios.
pub fn parse_batch(text: &str) -> Result<Vec<ScenarioConfig>, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config("", e.to_string()))?;
    if value.is_array() {
        parse_located(text)
    } else {
        Ok(vec![parse_located(text)?])
    }
}

fn parse_located<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        let message = e.into_inner().to_string();
        let pointer = match serde_json::from_str::<serde_json::Value>(text) {
            Ok(root) => refine_pointer(&root, pointer, &message),
            Err(_) => pointer,
        };
        CliError::config(pointer, message)
    })
}

/// Tagged enums buffer their content, so the reported path stops at the
/// enum object. Descends to the key the message is about when it is unique.
fn refine_pointer(root: &serde_json::Value, mut pointer: String, message: &str) -> String {
    use serde_json::Value;
    if let Some(rest) = message.strip_prefix("unknown field `") {
        let key = rest.split('`').next().unwrap_or_default();
        if matches!(root.pointer(&pointer), Some(Value::Object(m)) if m.contains_key(key)) {
            pointer = format!("{pointer}/{}", escape_key(key));
        }
        return pointer;
    }
    let Some(found) = message
        .strip_prefix("invalid type: ")
        .or_else(|| message.strip_prefix("invalid value: "))
    else {
        return pointer;
    };
    let describe = |v: &Value| match v {
        Value::Null => "null".to_string(),
        Value::Bool(b) => format!("boolean `{b}`"),
        Value::Number(n) if n.is_f64() => format!("floating point `{n}`"),
        Value::Number(n) => format!("integer `{n}`"),
        Value::String(s) => format!("string {s:?}"),
        Value::Array(_) => "sequence".to_string(),
        Value::Object(_) => "map".to_string(),
    };
    fn collect(v: &Value, at: String, hit: &dyn Fn(&Value) -> bool, out: &mut Vec<String>) {
        if let Value::Object(map) = v {
            for (k, child) in map {
                let path = format!("{at}/{}", escape_key(k));
                if hit(child) {
                    out.push(path.clone());
                }
                collect(child, path, hit, out);
            }
        }
    }
    let hit = |v: &Value| found.starts_with(&format!("{},", describe(v)));
    let mut hits = Vec::new();
    if let Some(v) = root.pointer(&pointer) {
        collect(v, pointer.clone(), &hit, &mut hits);
    }
    match hits.as_slice() {
        [only] => only.clone(),
        _ => pointer,
    }
}

fn escape_key(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&escape_key(key)),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}
