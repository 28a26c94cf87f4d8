//! Scenario configuration files (TOML).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_system::SolverKind;
use crate::material::MaterialModel;
use crate::mesh::Side;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub material: MaterialConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionConfig>,
    pub boundary: BoundaryConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fractures: Vec<FractureConfig>,
    pub time: TimeConfig,
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Published values kept for the record; not read by the runner.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub reference: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Cartesian,
    Simplex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "type")]
    pub kind: GridKind,
    /// Box cells per axis (simplex grids split each box cell).
    pub cells: Vec<usize>,
    /// Normal of planes the simplex faces must conform to (fractures).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_normal: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    #[serde(flatten)]
    pub model: MaterialModel,
    #[serde(default = "unit_density")]
    pub density: f64,
}

fn unit_density() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub material: MaterialConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKindConfig {
    Dirichlet,
    Neumann,
    Robin,
    Absorbing,
}

/// Data on a side: zero, or the scenario's analytic solution (displacement
/// for Dirichlet sides, traction otherwise).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryDataConfig {
    #[default]
    Zero,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideConfig {
    pub kind: BoundaryKindConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub data: BoundaryDataConfig,
    /// Robin weight matrix, row-major `D × D`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Vec<Vec<f64>>>,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Condition for every side not listed in `sides`.
    pub default: SideConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sides: BTreeMap<Side, SideConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractureConfig {
    pub polygon: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// At rest.
    Zero,
    /// Product-form manufactured solution with its body force.
    Manufactured,
    /// Plane P-wave along `(cos θ, sin θ)`, speed from the default material
    /// before any filtering.
    PlaneWave { theta: f64 },
    /// Zero displacement and acceleration, radial Ricker velocity.
    Ricker { center: Vec<f64>, width: f64 },
}

/// Refinement levels; each level overrides the grid cells and time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub cells: Vec<Vec<usize>>,
    pub dt: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write a VTK snapshot every this many steps (0 disables).
    #[serde(default, skip_serializing_if = "is_default")]
    pub snapshot_stride: usize,
    /// Additional snapshot times, taken at the nearest step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    /// Record `E(t)` every step into `energy.csv`.
    #[serde(default, skip_serializing_if = "is_default")]
    pub energy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub samples: usize,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub kind: SolverKind,
}

fn config_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            config_err(&path, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("", e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    /// Check ranges and cross-field consistency, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(d == 2 || d == 3) || self.domain.upper.len() != d {
            return Err(config_err("domain", "lower and upper need 2 or 3 matching coordinates"));
        }
        if (0..d).any(|a| !(self.domain.upper[a] > self.domain.lower[a])) {
            return Err(config_err("domain", "upper must exceed lower on every axis"));
        }
        if self.grid.cells.len() != d || self.grid.cells.contains(&0) {
            return Err(config_err("grid.cells", format!("need {d} positive counts")));
        }
        if let Some(n) = &self.grid.align_normal {
            if n.len() != d {
                return Err(config_err("grid.align_normal", format!("need {d} components")));
            }
        }
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return Err(config_err("time.dt", "must be positive"));
        }
        if !(self.time.t_final > 0.0 && self.time.t_final.is_finite()) {
            return Err(config_err("time.t_final", "must be positive"));
        }
        if !(self.material.density > 0.0) {
            return Err(config_err("material.density", "must be positive"));
        }
        self.material.model.tensor(d).map_err(|e| config_err("material", e.to_string()))?;
        for (i, r) in self.regions.iter().enumerate() {
            let p = format!("regions[{i}]");
            if r.lower.len() != d || r.upper.len() != d {
                return Err(config_err(&p, format!("need {d} coordinates")));
            }
            let inside = (0..d).all(|a| {
                r.lower[a] >= self.domain.lower[a] - 1e-12 && r.upper[a] <= self.domain.upper[a] + 1e-12 && r.lower[a] < r.upper[a]
            });
            if !inside {
                return Err(config_err(&p, "region box must be non-empty and inside the domain"));
            }
            if !(r.material.density > 0.0) {
                return Err(config_err(&format!("{p}.material.density"), "must be positive"));
            }
            r.material.model.tensor(d).map_err(|e| config_err(&format!("{p}.material"), e.to_string()))?;
        }
        let sides = std::iter::once(("boundary.default".to_string(), &self.boundary.default))
            .chain(self.boundary.sides.iter().map(|(s, c)| (format!("boundary.sides.{s:?}"), c)));
        for (p, s) in sides {
            match (s.kind, &s.weight) {
                (BoundaryKindConfig::Robin, Some(w)) if w.len() == d && w.iter().all(|r| r.len() == d) => {}
                (BoundaryKindConfig::Robin, _) => return Err(config_err(&p, format!("Robin sides need a {d}x{d} weight"))),
                (_, Some(_)) => return Err(config_err(&p, "weight is only valid on Robin sides")),
                _ => {}
            }
        }
        for (s, _) in &self.boundary.sides {
            if s.axis() >= d {
                return Err(config_err("boundary.sides", format!("{s:?} does not exist in {d}D")));
            }
        }
        for (i, f) in self.fractures.iter().enumerate() {
            if f.polygon.iter().any(|p| p.len() != d) || f.polygon.len() < 2 {
                return Err(config_err(&format!("fractures[{i}].polygon"), format!("need at least two {d}D points")));
            }
        }
        match &self.initial {
            InitialCondition::Ricker { center, width } => {
                if center.len() != d {
                    return Err(config_err("initial.center", format!("need {d} coordinates")));
                }
                if !(*width > 0.0) {
                    return Err(config_err("initial.width", "must be positive"));
                }
            }
            InitialCondition::PlaneWave { .. } if d != 2 => {
                return Err(config_err("initial", "plane waves are two-dimensional"));
            }
            _ => {}
        }
        if let Some(c) = &self.convergence {
            if c.cells.len() != c.dt.len() || c.cells.len() < 2 {
                return Err(config_err("convergence", "need at least two levels with one dt per level"));
            }
            if c.cells.iter().any(|n| n.len() != d || n.contains(&0)) {
                return Err(config_err("convergence.cells", format!("need {d} positive counts per level")));
            }
            if c.dt.iter().any(|&t| !(t > 0.0)) {
                return Err(config_err("convergence.dt", "must be positive"));
            }
            if self.exact_solution_known().is_none() {
                return Err(config_err("convergence", "needs an initial condition with an analytic solution"));
            }
        }
        if let Some(p) = &self.output.probe {
            if p.from.len() != d || p.to.len() != d || p.samples < 2 {
                return Err(config_err("output.probe", format!("need {d}D endpoints and at least two samples")));
            }
        }
        Ok(())
    }

    /// Whether the initial condition is an analytic solution of the run.
    pub(crate) fn exact_solution_known(&self) -> Option<()> {
        matches!(self.initial, InitialCondition::Manufactured | InitialCondition::PlaneWave { .. }).then_some(())
    }
}
