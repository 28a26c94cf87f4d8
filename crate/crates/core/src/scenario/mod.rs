//! Named scenarios: configuration, runner and outputs.

mod config;
mod probe;
mod run;
mod vtk;

pub use config::*;
pub use probe::{probe_line, sample_line, write_probe_csv, ProbeSample};
pub use run::{
    build_boundary, build_field, build_grid, exact_solution, output_dir, run_level, run_scenario, LevelResult, ProbeResult,
    RunOptions, RunSummary,
};
pub use vtk::{write_vtk, write_vtk_snapshot, VtkSnapshot};

use crate::error::{Error, Result};

/// Scenarios shipped with the crate, with their configuration files.
pub const BUILTIN_SCENARIOS: [(&str, &str); 7] = [
    ("dirichlet_convergence_2d", include_str!("../../../../scenarios/dirichlet_convergence_2d.toml")),
    ("dirichlet_convergence_3d", include_str!("../../../../scenarios/dirichlet_convergence_3d.toml")),
    ("abc_quasi1d", include_str!("../../../../scenarios/abc_quasi1d.toml")),
    ("abc_rotated_energy", include_str!("../../../../scenarios/abc_rotated_energy.toml")),
    ("example1_1", include_str!("../../../../scenarios/example1_1.toml")),
    ("example1_2", include_str!("../../../../scenarios/example1_2.toml")),
    ("example2_fracture", include_str!("../../../../scenarios/example2_fracture.toml")),
];

/// Names of the shipped scenarios.
pub fn list_scenarios() -> Vec<&'static str> {
    BUILTIN_SCENARIOS.iter().map(|(n, _)| *n).collect()
}

/// Parse a shipped scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config { path: name.into(), msg: "unknown scenario".into() })?;
    ScenarioConfig::from_toml(text)
}

#[cfg(test)]
mod tests;
