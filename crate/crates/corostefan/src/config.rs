//! Run configuration in TOML.
//!
//! A file describes one run; an optional `[[segments]]` array lists
//! partial overrides, each producing a separate sub-run that starts from
//! its own initial data. The `[material]` table overrides individual keys
//! of the reference material.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoundarySpec, FaceKind, FaceSpec, HeatFlux};
use crate::materials::MaterialParams;
use crate::stepper::SolverSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("segment {segment}")]
    Segment { segment: usize, source: toml::de::Error },
    #[error("material: {0}")]
    Material(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
}

/// Boundary conditions along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBoundary {
    pub kind: FaceKind,
    #[serde(default)]
    pub flux_low: HeatFlux,
    #[serde(default)]
    pub flux_high: HeatFlux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
    pub boundary: Vec<AxisBoundary>,
}

impl GridConfig {
    pub fn boundary_spec(&self) -> BoundarySpec {
        BoundarySpec {
            faces: self
                .boundary
                .iter()
                .map(|b| {
                    [
                        FaceSpec { kind: b.kind, heat_flux: b.flux_low },
                        FaceSpec { kind: b.kind, heat_flux: b.flux_high },
                    ]
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: f64,
    pub steps: usize,
    /// Snapshot cadence in steps; 0 writes only the first and last state.
    #[serde(default)]
    pub output_every: usize,
}

/// Scalar initial profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarInit {
    Uniform { value: f64 },
    /// `low` below `position` along `axis`, `high` above.
    Step { axis: usize, position: f64, low: f64, high: f64 },
    Disk { center: [f64; 2], radius: f64, inside: f64, outside: f64 },
}

impl ScalarInit {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            ScalarInit::Uniform { value } => value,
            ScalarInit::Step { axis, position, low, high } => {
                if x[axis] < position {
                    low
                } else {
                    high
                }
            }
            ScalarInit::Disk { center, radius, inside, outside } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                if r2 <= radius * radius {
                    inside
                } else {
                    outside
                }
            }
        }
    }
}

/// Initial phase fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChiInit {
    /// Liquid where the temperature exceeds the transformation temperature.
    Equilibrium,
    Profile { profile: ScalarInit },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityInit {
    #[default]
    Zero,
    /// `v_x = amplitude · sin(2π mode y / L_y)`.
    Shear { amplitude: f64, mode: usize },
    /// A right-going damped longitudinal mode with wave number `2π mode / L_x`;
    /// sets the strain as well.
    Wave { amplitude: f64, mode: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub velocity: VelocityInit,
    /// Uniform initial strain in packed storage (`xx`, `yy`, `xy` in 2D).
    #[serde(default)]
    pub strain: Vec<f64>,
    #[serde(default = "undamaged")]
    pub alpha: ScalarInit,
    pub theta: ScalarInit,
    #[serde(default = "equilibrium")]
    pub chi: ChiInit,
    /// Amplitude of seeded random velocity noise.
    #[serde(default)]
    pub noise: f64,
}

fn undamaged() -> ScalarInit {
    ScalarInit::Uniform { value: 1.0 }
}

fn equilibrium() -> ChiInit {
    ChiInit::Equilibrium
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceConfig {
    /// `f_x = amplitude · sin(2π mode y / L_y)`.
    Shear { amplitude: f64, mode: usize },
    Uniform { value: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KinematicsConfig {
    /// Velocity held at zero.
    Still,
    /// Rotation about the box center: rigid inside `inner`, fading
    /// smoothly to rest at `outer`. Without radii the rotation is rigid everywhere.
    Rotation {
        omega: f64,
        #[serde(default)]
        inner: Option<f64>,
        #[serde(default)]
        outer: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Nonzero exit status on any audit failure.
    pub strict: bool,
    pub slack_factor: f64,
    pub conserve: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { strict: false, slack_factor: 10.0, conserve: 1e-8 }
    }
}

/// Scenario-specific post-processing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    #[default]
    None,
    /// Front position against the two-phase similarity solution.
    Stefan,
    /// Phase velocity from two velocity probes a quarter wavelength apart.
    Dispersion,
    /// Invariants of the strain at the box center under rigid rotation.
    Rotation,
}

/// One fully resolved run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub material: toml::Table,
    #[serde(default)]
    pub solver: SolverSettings,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub force: Option<ForceConfig>,
    #[serde(default)]
    pub kinematics: Option<KinematicsConfig>,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// The reference material with this run's overrides applied.
    pub fn material(&self) -> Result<MaterialParams, ConfigError> {
        let base = toml::Value::try_from(MaterialParams::default()).map_err(|e| ConfigError::Material(e.to_string()))?;
        let mut table = match base {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Material("reference material is not a table".into())),
        };
        for (k, v) in &self.material {
            table.insert(k.clone(), v.clone());
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Material(e.to_string()))
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let d = self.grid.cells.len();
        if self.grid.extent.len() != d || self.grid.boundary.len() != d {
            return Err(ConfigError::Invalid("grid cells, extent and boundary must have one entry per axis".into()));
        }
        if !(self.time.tau > 0.0) {
            return Err(ConfigError::Invalid("time.tau must be positive".into()));
        }
        if !(self.audit.slack_factor >= 0.0 && self.audit.conserve >= 0.0) {
            return Err(ConfigError::Invalid("audit tolerances must be non-negative".into()));
        }
        if !self.initial.strain.is_empty() && self.initial.strain.len() != d * (d + 1) / 2 {
            return Err(ConfigError::Invalid(format!("initial.strain needs {} packed entries", d * (d + 1) / 2)));
        }
        Ok(())
    }
}

/// A configuration file resolved into its sub-runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub name: String,
    pub segments: Vec<RunConfig>,
}

fn merge(into: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (into.get_mut(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

impl RunPlan {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse()?;
        let overrides = match table.remove("segments") {
            None => vec![toml::Table::new()],
            Some(toml::Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    toml::Value::Table(t) => Ok(t),
                    _ => Err(ConfigError::Invalid("segments must be tables".into())),
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(ConfigError::Invalid("segments must be an array of tables".into())),
        };
        if overrides.is_empty() {
            return Err(ConfigError::Invalid("segments must not be empty".into()));
        }
        let mut segments = Vec::with_capacity(overrides.len());
        for (k, over) in overrides.iter().enumerate() {
            let mut t = table.clone();
            merge(&mut t, over);
            let cfg: RunConfig = toml::Value::Table(t).try_into().map_err(|source| ConfigError::Segment { segment: k, source })?;
            cfg.check()?;
            cfg.material()?.validate(cfg.grid.cells.len()).map_err(|e| ConfigError::Material(e.to_string()))?;
            segments.push(cfg);
        }
        Ok(Self { name: segments[0].name.clone(), segments })
    }

    /// Overrides the step count and step size of every segment.
    pub fn with_overrides(mut self, steps: Option<usize>, tau: Option<f64>) -> Self {
        for s in &mut self.segments {
            if let Some(n) = steps {
                s.time.steps = n;
            }
            if let Some(t) = tau {
                s.time.tau = t;
            }
        }
        self
    }
}
