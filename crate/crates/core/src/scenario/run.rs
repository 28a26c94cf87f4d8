//! Turning a configuration into grids, operators and a time loop.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::config::{BoundaryDataConfig, BoundaryKindConfig, GridKind, InitialCondition, MaterialConfig, ScenarioConfig, SideConfig};
use super::probe::{probe_line, ProbeSample};
use super::vtk::write_vtk_snapshot;
use crate::error::{Error, Result};
use crate::linear_system::SolverKind;
use crate::material::{apply_to_gradient, Material, MaterialModel, Region, StiffnessField};
use crate::mesh::{build_cartesian_grid, build_simplex_grid_aligned, flips_for_normal, split_fracture_faces, DomainBox, Grid, Point, Side};
use crate::mpsa::{compute_abc_weights, discretize, face_tractions, BcKind, BoundaryData, BoundarySpec};
use crate::par;
use crate::timestepper::{NewmarkParams, Stepper, WaveState};
use crate::verification::{
    estimate_rates, manufactured_solution_2d, manufactured_solution_3d, p_wave_speed, per_area, project_cells, relative_errors,
    ricker_velocity, rotated_wave_initial, system_energy, AnalyticSolution, ConvergenceReport, ConvergenceRow, EnergySeries,
};

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub snapshot_stride: Option<usize>,
    pub solver: Option<SolverKind>,
    /// Skip every file (for tests and embedding).
    pub no_files: bool,
}

/// Line probe taken at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub t: f64,
    pub samples: Vec<ProbeSample>,
}

/// Outcome of one grid / time-step level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelResult {
    pub cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_energy_ratio: Option<f64>,
    #[serde(skip)]
    pub energy: Option<EnergySeries>,
    #[serde(skip)]
    pub probes: Vec<ProbeResult>,
    pub snapshots: usize,
    pub wall_time_s: f64,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub dim: usize,
    pub parallel: bool,
    pub levels: Vec<LevelResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    pub wall_time_s: f64,
}

fn config_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

fn point(v: &[f64]) -> Point {
    let mut p = Point::zeros();
    p.as_mut_slice()[..v.len()].copy_from_slice(v);
    p
}

fn material(cfg: &MaterialConfig, dim: usize) -> Result<Material> {
    Ok(Material { stiffness: cfg.model.tensor(dim)?, density: cfg.density })
}

/// Build the grid of a configuration with the given box counts.
pub fn build_grid(cfg: &ScenarioConfig, cells: &[usize]) -> Result<Grid> {
    let domain = DomainBox::new(&cfg.domain.lower, &cfg.domain.upper)?;
    let mut grid = match cfg.grid.kind {
        GridKind::Cartesian => build_cartesian_grid(&domain, cells)?,
        GridKind::Simplex => {
            let flips = match &cfg.grid.align_normal {
                Some(n) => flips_for_normal(cfg.dim(), &point(n))?,
                None => vec![false; cfg.dim()],
            };
            build_simplex_grid_aligned(&domain, cells, &flips)?
        }
    };
    for f in &cfg.fractures {
        let poly: Vec<Point> = f.polygon.iter().map(|p| point(p)).collect();
        grid = split_fracture_faces(&grid, &poly)?.0;
    }
    Ok(grid)
}

/// Stiffness field with the default material and the region overrides.
pub fn build_field(cfg: &ScenarioConfig, grid: &Grid) -> Result<StiffnessField> {
    let d = cfg.dim();
    let regions = cfg
        .regions
        .iter()
        .map(|r| Ok(Region { bounds: DomainBox::new(&r.lower, &r.upper)?, material: material(&r.material, d)? }))
        .collect::<Result<Vec<_>>>()?;
    StiffnessField::from_regions(grid, material(&cfg.material, d)?, &regions)
}

/// Analytic solution of the configuration, when it has one.
pub fn exact_solution(cfg: &ScenarioConfig) -> Result<Option<Arc<dyn AnalyticSolution>>> {
    Ok(match &cfg.initial {
        InitialCondition::Manufactured => Some(match cfg.dim() {
            2 => Arc::new(manufactured_solution_2d()) as Arc<dyn AnalyticSolution>,
            _ => Arc::new(manufactured_solution_3d()),
        }),
        InitialCondition::PlaneWave { theta } => match cfg.material.model {
            MaterialModel::Isotropic { lambda, mu, .. } => {
                Some(Arc::new(rotated_wave_initial(*theta, p_wave_speed(lambda, mu, cfg.material.density))))
            }
            _ => return Err(config_err("initial", "plane waves need an isotropic default material")),
        },
        _ => None,
    })
}

fn side_condition(cfg: &ScenarioConfig, side: Side) -> &SideConfig {
    cfg.boundary.sides.get(&side).unwrap_or(&cfg.boundary.default)
}

/// Boundary conditions per box side.
pub fn build_boundary(cfg: &ScenarioConfig, grid: &Grid, field: &StiffnessField) -> Result<BoundarySpec> {
    let exact = exact_solution(cfg)?;
    let stiffness = field.materials()[0].stiffness.clone();
    let mut err = None;
    let bc = BoundarySpec::by_side(grid, |side| {
        let s = side_condition(cfg, side);
        let kind = match s.kind {
            BoundaryKindConfig::Dirichlet => BcKind::Dirichlet,
            BoundaryKindConfig::Neumann => BcKind::Neumann,
            BoundaryKindConfig::Absorbing => BcKind::Absorbing,
            BoundaryKindConfig::Robin => {
                let w = s.weight.as_ref().expect("validated");
                let mut r = Matrix3::zeros();
                for (i, row) in w.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        r[(i, j)] = *v;
                    }
                }
                BcKind::Robin(r)
            }
        };
        let data = match (s.data, &exact, &kind) {
            (BoundaryDataConfig::Zero, _, _) => BoundaryData::Zero,
            (BoundaryDataConfig::Exact, Some(sol), BcKind::Dirichlet) => {
                let sol = sol.clone();
                BoundaryData::function(move |t, x| sol.displacement(x, t))
            }
            (BoundaryDataConfig::Exact, Some(sol), BcKind::Neumann) => {
                let sol = sol.clone();
                let c = stiffness.clone();
                let mut n = Point::zeros();
                n[side.axis()] = if side.is_upper() { 1.0 } else { -1.0 };
                BoundaryData::function(move |t, x| apply_to_gradient(&c, &sol.gradient(x, t)) * n)
            }
            _ => {
                err = Some(config_err(
                    &format!("boundary.sides.{side:?}.data"),
                    "exact data needs an analytic solution and a Dirichlet or Neumann side",
                ));
                BoundaryData::Zero
            }
        };
        (kind, data)
    });
    match err {
        Some(e) => Err(e),
        None => Ok(bc),
    }
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let n = (t_final / dt).round();
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(config_err("time", format!("t_final = {t_final} is not a whole number of steps of {dt}")));
    }
    Ok(n as usize)
}

fn write_csv_file(path: &Path, write: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
    write(BufWriter::new(File::create(path)?))
}

/// Run one level of a configuration: grid counts `cells` and step `dt`.
/// Files go to `out` when given.
pub fn run_level(cfg: &ScenarioConfig, cells: &[usize], dt: f64, out: Option<&Path>, opts: &RunOptions) -> Result<LevelResult> {
    let start = Instant::now();
    let d = cfg.dim();
    let grid = build_grid(cfg, cells)?;
    let field = build_field(cfg, &grid)?;
    let bc = build_boundary(cfg, &grid, &field)?;
    let abc = compute_abc_weights(&grid, &field, &bc, dt)?;
    let ops = discretize(&grid, &field, &bc, &abc)?;
    let params = NewmarkParams::new(dt)?;
    let solver = opts.solver.unwrap_or(cfg.solver.kind);
    let stepper = Stepper::new(&grid, &field, &bc, &abc, &ops, params, solver)?;
    let steps = step_count(cfg.time.t_final, dt)?;
    let exact = exact_solution(cfg)?;
    log::info!("{}: {} cells, {} steps of {dt}", cfg.name, grid.num_cells(), steps);

    let nc = grid.num_cells() * d;
    let (u0, v0, a0, hist) = match (&cfg.initial, &exact) {
        (InitialCondition::Zero, _) => (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], None),
        (InitialCondition::Ricker { center, width }, _) => {
            let f = ricker_velocity(point(center), *width)?;
            (vec![0.0; nc], project_cells(&grid, f), vec![0.0; nc], None)
        }
        (_, Some(sol)) => {
            let faces = |t: f64| -> Vec<f64> {
                (0..bc.num_faces()).flat_map(|b| sol.displacement(grid.face_center(bc.face(b)), t).as_slice()[..d].to_vec()).collect()
            };
            (
                project_cells(&grid, |x| sol.displacement(x, 0.0)),
                project_cells(&grid, |x| sol.velocity(x, 0.0)),
                project_cells(&grid, |x| sol.acceleration(x, 0.0)),
                Some((faces(0.0), faces(-dt))),
            )
        }
        (_, None) => unreachable!("analytic initial conditions always have a solution"),
    };
    let mut state = match hist {
        Some((h1, h2)) => {
            let mut s = stepper.initialize(0.0, u0, v0, a0, Some(h1))?;
            s.hist2 = h2;
            s
        }
        None => stepper.initialize(0.0, u0, v0, a0, None)?,
    };

    let stride = opts.snapshot_stride.unwrap_or(cfg.output.snapshot_stride);
    let snap_steps: BTreeSet<usize> = cfg.output.snapshot_times.iter().map(|t| (t / dt).round() as usize).collect();
    let probe_steps: Vec<(usize, f64)> =
        cfg.output.probe.iter().flat_map(|p| p.times.iter().map(|&t| ((t / dt).round() as usize, t))).collect();
    let mut energy = cfg.output.energy.then(EnergySeries::default);
    let mut probes = Vec::new();
    let mut snapshots = 0;
    let source = exact.clone().filter(|_| matches!(cfg.initial, InitialCondition::Manufactured));
    let q = source.as_ref().map(|s| move |t: f64, x: &Point| -> Vector3<f64> { s.source(x, t) });

    let mut observe = |state: &WaveState| -> Result<()> {
        if let Some(e) = energy.as_mut() {
            e.push(state.t, system_energy(&grid, &field, &state.v)?);
        }
        if let Some(p) = &cfg.output.probe {
            for &(k, t) in probe_steps.iter().filter(|(k, _)| *k == state.n) {
                let samples = probe_line(&grid, &state.u, &point(&p.from), &point(&p.to), p.samples)?;
                if let Some(dir) = out {
                    write_csv_file(&dir.join(format!("probe_{k:06}.csv")), |w| super::probe::write_probe_csv(&samples, w))?;
                }
                probes.push(ProbeResult { t, samples });
            }
        }
        let snap = (stride > 0 && state.n % stride == 0) || snap_steps.contains(&state.n);
        if let (true, Some(dir)) = (snap, out) {
            write_vtk_snapshot(&grid, state, &dir.join(format!("snapshot_{:06}.vtk", state.n)))?;
            snapshots += 1;
        }
        Ok(())
    };
    observe(&state)?;
    let mut last_data = Vec::new();
    for _ in 0..steps {
        let t_next = state.t0 + (state.n + 1) as f64 * dt;
        last_data = stepper.boundary_values(t_next, &state.hist1, &state.hist2)?;
        state = match &q {
            Some(q) => stepper.step(&state, Some(q))?,
            None => stepper.step(&state, None)?,
        };
        observe(&state)?;
    }

    let (mut err_u, mut err_t) = (None, None);
    if let Some(sol) = &exact {
        let t = per_area(&grid, &face_tractions(&ops, &state.u, &last_data)?)?;
        let (eu, et) = relative_errors(&grid, &state.u, &t, &field.materials()[0].stiffness, sol.as_ref(), state.t)?;
        err_u = Some(eu);
        err_t = Some(et);
    }
    let final_energy_ratio = energy.as_ref().and_then(|e| e.ratio().last().copied());
    if let (Some(e), Some(dir)) = (&energy, out) {
        write_csv_file(&dir.join("energy.csv"), |w| e.write_csv(w))?;
    }
    Ok(LevelResult {
        cells: grid.num_cells(),
        dx: grid.spacing(),
        dt,
        steps,
        err_u,
        err_t,
        final_energy_ratio,
        energy,
        probes,
        snapshots,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Output directory for a run: the override, the configured one, or
/// `out/<name>`.
pub fn output_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

/// Run a scenario: every convergence level, or the single configured level,
/// then write `convergence.csv` and `summary.json`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = output_dir(cfg, opts);
    let out = (!opts.no_files).then_some(dir.as_path());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut levels = Vec::new();
    let mut convergence = None;
    match &cfg.convergence {
        Some(conv) => {
            for (cells, &dt) in conv.cells.iter().zip(&conv.dt) {
                // per-level artefacts would overwrite each other; only the
                // report is written
                levels.push(run_level(cfg, cells, dt, None, opts)?);
            }
            let rows = levels
                .iter()
                .map(|l| ConvergenceRow { cells: l.cells, dx: l.dx, dt: l.dt, err_u: l.err_u.unwrap(), err_t: l.err_t.unwrap() })
                .collect();
            let report = estimate_rates(rows)?;
            if let Some(dir) = out {
                write_csv_file(&dir.join("convergence.csv"), |w| report.write_csv(w))?;
            }
            convergence = Some(report);
        }
        None => levels.push(run_level(cfg, &cfg.grid.cells, cfg.time.dt, out, opts)?),
    }
    let summary = RunSummary {
        name: cfg.name.clone(),
        dim: cfg.dim(),
        parallel: par::is_parallel(),
        levels,
        convergence,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &summary)?;
    }
    Ok(summary)
}
