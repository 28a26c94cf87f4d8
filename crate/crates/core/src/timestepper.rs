//! Implicit Newmark time stepping of the discrete wave equation.
//!
//! Each step solves the constant global system for `u^n`, then recovers
//! `u̇^n`, `ü^n` from the Newmark relations. Absorbing faces need the boundary
//! displacement at the two previous levels; these are carried in the state
//! and shifted after every step.

use nalgebra::Vector3;

use crate::error::{check_len, Error, Result};
use crate::linear_system::{assemble_global, GlobalSystem, SolverKind};
use crate::material::StiffnessField;
use crate::mesh::{Grid, Point};
use crate::mpsa::{apply_abc_history, boundary_displacement_trace, AbcWeight, BoundarySpec, StressOperators};

/// Volumetric source `q(t, x)` (force per unit volume).
pub type SourceFn<'s> = &'s (dyn Fn(f64, &Point) -> Vector3<f64> + Sync);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl NewmarkParams {
    /// Average-acceleration scheme, `β = 1/4`, `γ = 1/2`.
    pub fn new(dt: f64) -> Result<Self> {
        Self::with(0.25, 0.5, dt)
    }

    pub fn with(beta: f64, gamma: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !(beta > 0.0 && gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("need β > 0 and γ ≥ 0, got β = {beta}, γ = {gamma}")));
        }
        if 2.0 * beta > 1.0 {
            log::warn!("Newmark β = {beta} has 2β > 1, outside the tested regime");
        }
        Ok(Self { beta, gamma, dt })
    }

    /// Whether `2β ≤ 1`.
    pub fn in_standard_regime(&self) -> bool {
        2.0 * self.beta <= 1.0
    }

    /// Newmark history `u/(βΔt²) + u̇/(βΔt) + (1−2β)/(2β) ü`, componentwise.
    pub fn history(&self, u: f64, v: f64, a: f64) -> f64 {
        let (b, dt) = (self.beta, self.dt);
        u / (b * dt * dt) + v / (b * dt) + (1.0 - 2.0 * b) / (2.0 * b) * a
    }

    /// New `(u̇, ü)` from the new displacement and the previous level.
    pub fn kinematics(&self, u_new: f64, u: f64, v: f64, a: f64) -> (f64, f64) {
        let (b, g, dt) = (self.beta, self.gamma, self.dt);
        let a_new = (u_new - u) / (b * dt * dt) - v / (b * dt) - (1.0 - 2.0 * b) / (2.0 * b) * a;
        let v_new = v + dt * ((1.0 - g) * a + g * a_new);
        (v_new, a_new)
    }

    /// Forward Newmark update `(u^n, u̇^n)` from `ü^n` and the previous level.
    pub fn forward(&self, a_new: f64, u: f64, v: f64, a: f64) -> (f64, f64) {
        let (b, g, dt) = (self.beta, self.gamma, self.dt);
        let u_new = u + dt * v + 0.5 * dt * dt * ((1.0 - 2.0 * b) * a + 2.0 * b * a_new);
        let v_new = v + dt * ((1.0 - g) * a + g * a_new);
        (u_new, v_new)
    }
}

/// Cell kinematics plus the boundary displacement at the two previous levels.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub t0: f64,
    pub t: f64,
    pub n: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// Boundary-face displacement at `n − 1` relative to the next step.
    pub hist1: Vec<f64>,
    /// Boundary-face displacement at `n − 2` relative to the next step.
    pub hist2: Vec<f64>,
}

/// Velocity and acceleration at the new level from `u_new`.
pub fn update_kinematics(state: &WaveState, u_new: &[f64], params: &NewmarkParams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(state.u.len(), u_new.len())?;
    Ok((0..u_new.len()).map(|i| params.kinematics(u_new[i], state.u[i], state.v[i], state.a[i])).unzip())
}

/// Everything fixed over a run: operators, boundary setup and the factorized
/// system.
pub struct Stepper<'a> {
    grid: &'a Grid,
    bc: &'a BoundarySpec,
    abc: &'a AbcWeight,
    ops: &'a StressOperators,
    system: GlobalSystem,
    params: NewmarkParams,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a Grid,
        field: &StiffnessField,
        bc: &'a BoundarySpec,
        abc: &'a AbcWeight,
        ops: &'a StressOperators,
        params: NewmarkParams,
        solver: SolverKind,
    ) -> Result<Self> {
        if bc.has_absorbing() && (abc.dt() - params.dt).abs() > 1e-14 * params.dt {
            return Err(Error::InvalidArgument(format!(
                "absorbing weights built for Δt = {} but stepping with Δt = {}",
                abc.dt(),
                params.dt
            )));
        }
        let system = assemble_global(grid, field, ops, params.beta, params.dt, solver)?;
        Ok(Self { grid, bc, abc, ops, system, params })
    }

    pub fn params(&self) -> &NewmarkParams {
        &self.params
    }

    pub fn system(&self) -> &GlobalSystem {
        &self.system
    }

    /// Boundary data at time `t` with the absorbing history folded in.
    pub fn boundary_values(&self, t: f64, hist1: &[f64], hist2: &[f64]) -> Result<Vec<f64>> {
        let mut data = self.bc.evaluate(self.grid, t);
        apply_abc_history(self.abc, self.grid.dim(), hist1, hist2, &mut data)?;
        Ok(data)
    }

    /// State at `t0`. Without an explicit history, both slots hold the face
    /// trace of `u0`; on absorbing faces this is the fixed point of the trace
    /// with steady history.
    pub fn initialize(&self, t0: f64, u0: Vec<f64>, v0: Vec<f64>, a0: Vec<f64>, history: Option<Vec<f64>>) -> Result<WaveState> {
        let nc = self.grid.num_cells() * self.grid.dim();
        let nb = self.bc.num_faces() * self.grid.dim();
        for x in [&u0, &v0, &a0] {
            check_len(nc, x.len())?;
        }
        let hist = match history {
            Some(h) => {
                check_len(nb, h.len())?;
                h
            }
            None => self.steady_trace(t0, &u0)?,
        };
        Ok(WaveState { t0, t: t0, n: 0, u: u0, v: v0, a: a0, hist1: hist.clone(), hist2: hist })
    }

    fn steady_trace(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let nb = self.bc.num_faces() * self.grid.dim();
        let mut h = vec![0.0; nb];
        let iters = if self.bc.has_absorbing() { 200 } else { 1 };
        for _ in 0..iters {
            let data = self.boundary_values(t, &h, &h)?;
            let next = boundary_displacement_trace(self.ops, u, &data)?;
            let change = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            h = next;
            if change <= 1e-14 * scale.max(1e-300) {
                break;
            }
        }
        Ok(h)
    }

    /// Advance one step to `t + Δt`.
    pub fn step(&self, state: &WaveState, source: Option<SourceFn>) -> Result<WaveState> {
        let d = self.grid.dim();
        let p = &self.params;
        let t = state.t0 + (state.n + 1) as f64 * p.dt;
        let mass = self.system.mass();
        let mut rhs: Vec<f64> = (0..mass.len()).map(|i| mass[i] * p.history(state.u[i], state.v[i], state.a[i])).collect();
        if let Some(q) = source {
            for c in 0..self.grid.num_cells() {
                let qc = q(t, self.grid.cell_center(c));
                let m = self.grid.cell_volume(c);
                for i in 0..d {
                    rhs[c * d + i] += m * qc[i];
                }
            }
        }
        let data = self.boundary_values(t, &state.hist1, &state.hist2)?;
        let fb = self.system.boundary_coupling().mul_vec(&data)?;
        rhs.iter_mut().zip(&fb).for_each(|(r, f)| *r += f);
        let u = self.system.solve(&rhs)?;
        let (v, a) = update_kinematics(state, &u, p)?;
        let trace = boundary_displacement_trace(self.ops, &u, &data)?;
        Ok(WaveState { t0: state.t0, t, n: state.n + 1, u, v, a, hist1: trace, hist2: state.hist1.clone() })
    }

    /// Take `steps` steps, calling `snapshot` on the initial state and then
    /// every `stride` steps (and on the last one).
    pub fn run(
        &self,
        mut state: WaveState,
        steps: usize,
        source: Option<SourceFn>,
        stride: usize,
        snapshot: &mut dyn FnMut(&WaveState) -> Result<()>,
    ) -> Result<WaveState> {
        let stride = stride.max(1);
        snapshot(&state)?;
        for k in 1..=steps {
            state = self.step(&state, source)?;
            if k % stride == 0 || k == steps {
                snapshot(&state)?;
            }
        }
        Ok(state)
    }
}
