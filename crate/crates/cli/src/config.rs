//! Scenario configuration: a TOML or JSON file describing the manifold, the
//! transport law, integrator settings, one task and where to write results.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub manifold: ManifoldSpec,
    #[serde(default)]
    pub transport: TransportChoice,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A catalog name such as `"sphere2:1"` or an inline connection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldSpec {
    Named(String),
    Inline(InlineManifold),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineManifold {
    #[serde(default = "default_inline_name")]
    pub name: String,
    /// `gamma[i][j][k]` is `Γ^i_jk` as an expression in `x1..xn`.
    pub gamma: Vec<Vec<Vec<String>>>,
    /// Points where this expression is positive form the chart domain.
    #[serde(default)]
    pub domain: Option<String>,
}

fn default_inline_name() -> String {
    "inline".into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportChoice {
    #[default]
    Parallel,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_panels")]
    pub quad_panels: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_step() -> f64 {
    1e-3
}

fn default_panels() -> usize {
    64
}

fn default_fd_step() -> f64 {
    1e-3
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: default_step(),
            quad_panels: default_panels(),
            fd_step: default_fd_step(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the command line and environment take precedence.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    /// File stem; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
}

/// Parameter grid: either explicit `values` or `count` equally spaced points
/// from `start` to `end` inclusive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub end: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl GridSpec {
    pub fn points(&self, key: &str) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.end, self.count) {
            (Some(v), None, None, None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(a), Some(b), Some(n)) if n >= 1 => {
                if n == 1 {
                    return Ok(vec![a]);
                }
                Ok((0..n)
                    .map(|k| if k == n - 1 { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
                    .collect())
            }
            _ => Err(CliError::invalid(key, "give either a non-empty `values` list or `start`, `end` and `count >= 1`")),
        }
    }
}

/// A curve given by coordinate expressions in `t`, or by initial data that is
/// integrated as a geodesic (or under `force`, expressions in `t`, `x1..xn`, `v1..vn`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub interval: [f64; 2],
    #[serde(default)]
    pub expressions: Option<Vec<String>>,
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_velocity: Option<Vec<f64>>,
    #[serde(default)]
    pub force: Option<Vec<String>>,
}

/// A two-parameter family of particles. Either `expressions` in `s` and `r`,
/// or initial data as expressions in `r` evolved in `s` from `s0` under
/// `force` (expressions in `s`, `r`, `x1..xn`, `v1..vn`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// Range of the particle parameter `s` covered by the scenario.
    pub s_interval: [f64; 2],
    #[serde(default)]
    pub expressions: Option<Vec<String>>,
    #[serde(default)]
    pub initial_point: Option<Vec<String>>,
    #[serde(default)]
    pub initial_velocity: Option<Vec<String>>,
    #[serde(default)]
    pub force: Option<Vec<String>>,
    #[serde(default)]
    pub s0: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
}

/// Observer geodesic from the first particle with initial tangent `direction`
/// (expressions in `s`), followed for parameter `length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    pub direction: Vec<String>,
    pub length: f64,
    #[serde(default = "default_observer_steps")]
    pub steps: usize,
}

fn default_observer_steps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Transport(TransportTask),
    Displacement(DisplacementTask),
    Deviation(DeviationTask),
    Jacobi(JacobiTask),
    EquationOfMotion(MotionTask),
    IdentityCheck(IdentityTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Transport(_) => "transport",
            TaskConfig::Displacement(_) => "displacement",
            TaskConfig::Deviation(_) => "deviation",
            TaskConfig::Jacobi(_) => "jacobi",
            TaskConfig::EquationOfMotion(_) => "equation_of_motion",
            TaskConfig::IdentityCheck(_) => "identity_check",
        }
    }
}

/// Transport from `s` to each `t` along `curve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportTask {
    pub curve: CurveSpec,
    pub s: f64,
    pub t: GridSpec,
    /// Vector to carry; without it the full matrix is written.
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
    /// Treat the curve as a closed loop and report its holonomy.
    #[serde(default)]
    pub closed_loop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementTask {
    pub curve: CurveSpec,
    pub s: f64,
    pub t: GridSpec,
    /// Intermediate point for the composition residual.
    #[serde(default)]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationTask {
    pub family: FamilySpec,
    pub r: [f64; 2],
    #[serde(default)]
    pub observer: Option<ObserverSpec>,
    pub s: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobiTask {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub h0: Vec<f64>,
    /// Initial covariant derivative `Dh/du`.
    pub dh0: Vec<f64>,
    pub interval: [f64; 2],
    pub u: GridSpec,
    /// Expected `‖h(u)‖` as an expression in `u`.
    #[serde(default)]
    pub reference: Option<String>,
    /// Perturbation size of the neighbouring-geodesic comparison.
    #[serde(default)]
    pub oracle_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionTask {
    pub family: FamilySpec,
    pub r: [f64; 2],
    #[serde(default)]
    pub observer: Option<ObserverSpec>,
    pub s: GridSpec,
    /// Step of the finite-difference second derivative on the left side.
    #[serde(default = "default_lhs_step")]
    pub lhs_step: f64,
}

fn default_lhs_step() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum IdentityTask {
    /// Second covariant derivative of `xi` along `u` against its decomposition.
    Basic(BasicCheck),
    /// Deviation identity for a congruence `y(u, v)` with rates `f`, `g`.
    Congruence(CongruenceCheck),
    /// Nearby-particle deviation equation as `r″ − r′` shrinks.
    NearbyParticles(NearbyCheck),
    /// First-order deviation as the observer offset shrinks.
    ObserverOffset(ObserverOffsetCheck),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasicCheck {
    pub u: Vec<String>,
    pub xi: Vec<String>,
    pub point: Vec<f64>,
    pub fd_steps: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongruenceCheck {
    /// `y(u, v)` as expressions in `u` and `v`.
    pub surface: Vec<String>,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub g: Option<String>,
    pub u: f64,
    pub v: [f64; 2],
    pub fd_steps: GridSpec,
    /// Difference step for the tangents of the surface.
    #[serde(default = "default_surface_step")]
    pub surface_fd_step: f64,
}

fn default_surface_step() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearbyCheck {
    pub family: FamilySpec,
    pub r: f64,
    pub offsets: GridSpec,
    pub s: f64,
    #[serde(default = "default_lhs_step")]
    pub lhs_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverOffsetCheck {
    pub family: FamilySpec,
    pub r: [f64; 2],
    pub direction: Vec<String>,
    pub lengths: GridSpec,
    pub s: f64,
    #[serde(default = "default_observer_steps")]
    pub steps: usize,
}

/// Command-line overrides of the integrator settings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub step: Option<f64>,
    pub quad_panels: Option<usize>,
    pub fd_step: Option<f64>,
}

impl ScenarioConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.step {
            self.integrator.step = s;
        }
        if let Some(p) = o.quad_panels {
            self.integrator.quad_panels = p;
        }
        if let Some(h) = o.fd_step {
            self.integrator.fd_step = h;
        }
    }

    /// SHA-256 of the configuration serialised as JSON with sorted keys.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let i = &self.integrator;
        positive("integrator.step", i.step)?;
        positive("integrator.fd_step", i.fd_step)?;
        if i.quad_panels < 2 {
            return Err(CliError::invalid("integrator.quad_panels", "must be at least 2"));
        }
        // Building every object compiles all expressions and checks dimensions.
        crate::runner::prepare(self).map(|_| ())
    }
}

pub(crate) fn positive(key: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(key, format!("must be positive, got {value}")))
    }
}

fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<_> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Reads a `.json` file as JSON and anything else as TOML, then validates it.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let cfg = parse_config(&text, path.extension().is_some_and(|e| e == "json"))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str, json: bool) -> Result<ScenarioConfig, CliError> {
    if json {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
    } else {
        toml::from_str(text).map_err(|e| CliError::Parse(toml_message(text, &e)))
    }
}

fn toml_message(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim_end().to_string();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            format!("line {line}, column {column}: {msg}")
        }
        None => msg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
manifold = "euclidean:2"
transport = "euclidean"

[task]
kind = "transport"
s = 0.0
t = { start = 0.0, end = 1.0, count = 3 }
curve = { interval = [0.0, 1.0], expressions = ["t", "t^2"] }
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL, false).unwrap();
        assert_eq!(cfg.integrator, IntegratorConfig::default());
        assert_eq!(cfg.transport, TransportChoice::Euclidean);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_ignores_key_order_and_format() {
        let a = parse_config(MINIMAL, false).unwrap();
        let reordered = r#"
transport = "euclidean"
manifold = "euclidean:2"
[task]
curve = { expressions = ["t", "t^2"], interval = [0.0, 1.0] }
t = { count = 3, end = 1.0, start = 0.0 }
s = 0.0
kind = "transport"
"#;
        let b = parse_config(reordered, false).unwrap();
        let c = parse_config(&serde_json::to_string(&a).unwrap(), true).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        let mut d = a.clone();
        d.apply(&Overrides {
            step: Some(5e-4),
            ..Overrides::default()
        });
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = parse_config(&MINIMAL.replace("s = 0.0", "s = 0.0\nspeed = 2"), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("speed") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn misspelled_manifold_names_the_key_and_lists_the_catalog() {
        let cfg = parse_config(&MINIMAL.replace("euclidean:2", "spere2:1"), false).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("manifold") && msg.contains("sphere2:<R>"), "{msg}");
    }

    #[test]
    fn grids() {
        let g = GridSpec {
            start: Some(0.0),
            end: Some(1.0),
            count: Some(5),
            ..GridSpec::default()
        };
        assert_eq!(g.points("t").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let bad = GridSpec {
            values: Some(vec![1.0]),
            count: Some(2),
            ..GridSpec::default()
        };
        assert!(bad.points("t").is_err());
    }
}
