//! Analytic solutions, discrete norms, error measures, energy and
//! convergence-rate estimation.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::material::{apply_to_gradient, StiffnessField, StiffnessTensor};
use crate::mesh::{Grid, Point};

/// A closed-form displacement history with its derivatives and the body force
/// that makes it solve the wave equation.
pub trait AnalyticSolution: Send + Sync {
    fn dim(&self) -> usize;
    fn displacement(&self, x: &Point, t: f64) -> Vector3<f64>;
    fn velocity(&self, x: &Point, t: f64) -> Vector3<f64>;
    fn acceleration(&self, x: &Point, t: f64) -> Vector3<f64>;
    /// `∂u_i/∂x_j` at `(x, t)`.
    fn gradient(&self, x: &Point, t: f64) -> Matrix3<f64>;
    /// Body force `q`; zero for free waves.
    fn source(&self, _x: &Point, _t: f64) -> Vector3<f64> {
        Vector3::zeros()
    }
}

const OMEGA_MS: f64 = 2.5 * PI;

/// `u_i = sin(5πt/2) Π_k x_k(1 − x_k)` in every component on the unit square
/// or cube, unit density and `λ = μ = 1`.
#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    dim: usize,
}

/// The manufactured solution in 3D.
pub fn manufactured_solution_3d() -> Manufactured {
    Manufactured { dim: 3 }
}

/// The same product form restricted to 2D.
pub fn manufactured_solution_2d() -> Manufactured {
    Manufactured { dim: 2 }
}

impl Manufactured {
    /// Spatial factor `s(x)`, its gradient and Hessian.
    fn shape(&self, x: &Point) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let d = self.dim;
        let p: Vec<f64> = (0..d).map(|k| x[k] * (1.0 - x[k])).collect();
        let dp: Vec<f64> = (0..d).map(|k| 1.0 - 2.0 * x[k]).collect();
        let prod_except = |skip: &[usize]| (0..d).filter(|k| !skip.contains(k)).map(|k| p[k]).product::<f64>();
        let s = prod_except(&[]);
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for i in 0..d {
            g[i] = dp[i] * prod_except(&[i]);
            for j in 0..d {
                h[(i, j)] = if i == j { -2.0 * prod_except(&[i]) } else { dp[i] * dp[j] * prod_except(&[i, j]) };
            }
        }
        (s, g, h)
    }

    fn fill(&self, v: f64) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        out.rows_mut(0, self.dim).fill(v);
        out
    }

    /// Source from the closed-form stress divergence,
    /// `∇·σ_i = g(t)(μΔs + (λ + μ)Σ_j ∂_i∂_j s)` with `λ = μ = 1`.
    fn source_from_hessian(&self, x: &Point, t: f64) -> Vector3<f64> {
        let (s, _, h) = self.shape(x);
        let lap = h.trace();
        let mut q = Vector3::zeros();
        for i in 0..self.dim {
            let div_sigma = lap + 2.0 * (0..self.dim).map(|j| h[(i, j)]).sum::<f64>();
            q[i] = -OMEGA_MS * OMEGA_MS * s - div_sigma;
        }
        q * (OMEGA_MS * t).sin()
    }
}

/// Body force of the 3D manufactured solution, written out term by term.
fn manufactured_source_3d(p: &Point, t: f64) -> Vector3<f64> {
    let (x, y, z) = (p[0], p[1], p[2]);
    let (a, b, c) = (1.0 - x, 1.0 - y, 1.0 - z);
    let w = -25.0 * PI * PI / 4.0 * x * y * z * a * b * c;
    let qx = w - 2.0 * x * y * z * b - 2.0 * x * y * z * c + 2.0 * x * y * a * b + 2.0 * x * y * b * c + 2.0 * x * z * a * c
        + 2.0 * x * z * b * c
        + 2.0 * y * z * a * b
        + 2.0 * y * z * a * c
        + 6.0 * y * z * b * c
        - 2.0 * y * a * b * c
        - 2.0 * z * a * b * c;
    let qy = w - 2.0 * x * y * z * a - 2.0 * x * y * z * c + 2.0 * x * y * a * b + 2.0 * x * y * a * c + 2.0 * x * z * a * b
        + 6.0 * x * z * a * c
        + 2.0 * x * z * b * c
        - 2.0 * x * a * b * c
        + 2.0 * y * z * a * c
        + 2.0 * y * z * b * c
        - 2.0 * z * a * b * c;
    let qz = w - 2.0 * x * y * z * a - 2.0 * x * y * z * b + 6.0 * x * y * a * b + 2.0 * x * y * a * c + 2.0 * x * y * b * c
        + 2.0 * x * z * a * b
        + 2.0 * x * z * a * c
        - 2.0 * x * a * b * c
        + 2.0 * y * z * a * b
        + 2.0 * y * z * b * c
        - 2.0 * y * a * b * c;
    Vector3::new(qx, qy, qz) * (OMEGA_MS * t).sin()
}

impl AnalyticSolution for Manufactured {
    fn dim(&self) -> usize {
        self.dim
    }
    fn displacement(&self, x: &Point, t: f64) -> Vector3<f64> {
        self.fill(self.shape(x).0 * (OMEGA_MS * t).sin())
    }
    fn velocity(&self, x: &Point, t: f64) -> Vector3<f64> {
        self.fill(self.shape(x).0 * OMEGA_MS * (OMEGA_MS * t).cos())
    }
    fn acceleration(&self, x: &Point, t: f64) -> Vector3<f64> {
        self.fill(-self.shape(x).0 * OMEGA_MS * OMEGA_MS * (OMEGA_MS * t).sin())
    }
    fn gradient(&self, x: &Point, t: f64) -> Matrix3<f64> {
        let g = self.shape(x).1 * (OMEGA_MS * t).sin();
        let mut m = Matrix3::zeros();
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = g[j];
            }
        }
        m
    }
    fn source(&self, x: &Point, t: f64) -> Vector3<f64> {
        if self.dim == 3 {
            manufactured_source_3d(x, t)
        } else {
            self.source_from_hessian(x, t)
        }
    }
}

/// Plane longitudinal wave `u = n sin(t − n·x/c_p)` travelling along
/// `n = (cos θ, sin θ)` in 2D.
#[derive(Clone, Copy, Debug)]
pub struct PlaneWave {
    pub theta: f64,
    pub cp: f64,
}

/// P-wave speed `√((λ + 2μ)/ρ)`.
pub fn p_wave_speed(lambda: f64, mu: f64, rho: f64) -> f64 {
    ((lambda + 2.0 * mu) / rho).sqrt()
}

/// The wave along `x` used in the quasi-1D test.
pub fn quasi1d_solution(lambda: f64, mu: f64, rho: f64) -> PlaneWave {
    PlaneWave { theta: 0.0, cp: p_wave_speed(lambda, mu, rho) }
}

/// The wave rotated by `θ`; evaluate at `t = 0` for the initial fields.
pub fn rotated_wave_initial(theta: f64, cp: f64) -> PlaneWave {
    PlaneWave { theta, cp }
}

impl PlaneWave {
    fn direction(&self) -> Vector3<f64> {
        Vector3::new(self.theta.cos(), self.theta.sin(), 0.0)
    }
    fn phase(&self, x: &Point, t: f64) -> f64 {
        t - (self.theta.cos() * x[0] + self.theta.sin() * x[1]) / self.cp
    }
}

impl AnalyticSolution for PlaneWave {
    fn dim(&self) -> usize {
        2
    }
    fn displacement(&self, x: &Point, t: f64) -> Vector3<f64> {
        self.direction() * self.phase(x, t).sin()
    }
    fn velocity(&self, x: &Point, t: f64) -> Vector3<f64> {
        self.direction() * self.phase(x, t).cos()
    }
    fn acceleration(&self, x: &Point, t: f64) -> Vector3<f64> {
        -self.direction() * self.phase(x, t).sin()
    }
    fn gradient(&self, x: &Point, t: f64) -> Matrix3<f64> {
        let n = self.direction();
        n * n.transpose() * (-self.phase(x, t).cos() / self.cp)
    }
}

/// Radial Ricker-type velocity `exp(−π²|x − x_R|²/w²)(x − x_R)`.
pub fn ricker_velocity(center: Point, width: f64) -> Result<impl Fn(&Point) -> Vector3<f64>> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("Ricker width must be positive, got {width}")));
    }
    Ok(move |x: &Point| {
        let r = x - center;
        (-PI * PI * r.norm_squared() / (width * width)).exp() * r
    })
}

/// `(Σ_K m_K |u_K|²)^{1/2}`.
pub fn cell_l2_norm(grid: &Grid, field: &[f64]) -> Result<f64> {
    let d = grid.dim();
    check_len(grid.num_cells() * d, field.len())?;
    let s: f64 = (0..grid.num_cells()).map(|c| grid.cell_volume(c) * field[c * d..(c + 1) * d].iter().map(|x| x * x).sum::<f64>()).sum();
    Ok(s.sqrt())
}

/// Face weight `(1/D) m_f |(d_L − d_R)·n_f|`.
pub fn face_weight(grid: &Grid, f: usize) -> f64 {
    let (dl, dr) = grid.face_cell_offsets(f);
    grid.face_area(f) * (dl - dr).dot(grid.face_normal(f)).abs() / grid.dim() as f64
}

/// Weighted face norm of per-area tractions.
pub fn face_l2_norm(grid: &Grid, tractions: &[f64]) -> Result<f64> {
    let d = grid.dim();
    check_len(grid.num_faces() * d, tractions.len())?;
    let s: f64 = (0..grid.num_faces()).map(|f| face_weight(grid, f) * tractions[f * d..(f + 1) * d].iter().map(|x| x * x).sum::<f64>()).sum();
    Ok(s.sqrt())
}

/// Divide integrated face tractions `m_f T_f` by the face measure.
pub fn per_area(grid: &Grid, integrated: &[f64]) -> Result<Vec<f64>> {
    let d = grid.dim();
    check_len(grid.num_faces() * d, integrated.len())?;
    Ok(integrated.iter().enumerate().map(|(k, t)| t / grid.face_area(k / d)).collect())
}

/// Exact cell displacements at the cell centres.
pub fn project_cells(grid: &Grid, f: impl Fn(&Point) -> Vector3<f64>) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.num_cells()).flat_map(|c| f(grid.cell_center(c)).as_slice()[..d].to_vec()).collect()
}

/// Exact per-area tractions `σ(x_f)·n_f` at the face centres.
pub fn project_tractions(grid: &Grid, stiffness: &StiffnessTensor, exact: &dyn AnalyticSolution, t: f64) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.num_faces())
        .flat_map(|f| {
            let sigma = apply_to_gradient(stiffness, &exact.gradient(grid.face_center(f), t));
            (sigma * grid.face_normal(f)).as_slice()[..d].to_vec()
        })
        .collect()
}

/// Relative errors `(ℰ_u, ℰ_T)` of cell displacements and per-area face
/// tractions against point values of the exact solution.
pub fn relative_errors(
    grid: &Grid,
    u: &[f64],
    tractions: &[f64],
    stiffness: &StiffnessTensor,
    exact: &dyn AnalyticSolution,
    t: f64,
) -> Result<(f64, f64)> {
    let ue = project_cells(grid, |x| exact.displacement(x, t));
    let te = project_tractions(grid, stiffness, exact, t);
    let rel = |num: f64, den: f64| if den > 0.0 { Ok(num / den) } else { Err(Error::UndefinedRelativeError) };
    check_len(ue.len(), u.len())?;
    check_len(te.len(), tractions.len())?;
    let du: Vec<f64> = u.iter().zip(&ue).map(|(a, b)| a - b).collect();
    let dt: Vec<f64> = tractions.iter().zip(&te).map(|(a, b)| a - b).collect();
    Ok((rel(cell_l2_norm(grid, &du)?, cell_l2_norm(grid, &ue)?)?, rel(face_l2_norm(grid, &dt)?, face_l2_norm(grid, &te)?)?))
}

/// `E = Σ_K m_K ρ_K |u̇_K|²`.
pub fn system_energy(grid: &Grid, field: &StiffnessField, velocity: &[f64]) -> Result<f64> {
    let d = grid.dim();
    check_len(grid.num_cells() * d, velocity.len())?;
    Ok((0..grid.num_cells())
        .map(|c| grid.cell_volume(c) * field.density(c) * velocity[c * d..(c + 1) * d].iter().map(|x| x * x).sum::<f64>())
        .sum())
}

/// One refinement level of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub err_u: f64,
    pub err_t: f64,
}

/// Rows plus consecutive-pair rates (`rates[i]` between rows `i` and `i+1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub rate_u: Vec<f64>,
    pub rate_t: Vec<f64>,
}

impl ConvergenceReport {
    pub fn last_rate_u(&self) -> f64 {
        *self.rate_u.last().unwrap_or(&f64::NAN)
    }

    pub fn last_rate_t(&self) -> f64 {
        *self.rate_t.last().unwrap_or(&f64::NAN)
    }

    /// CSV with columns `refinement,cells,dt,err_u,err_T,rate_u,rate_T`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["refinement", "cells", "dt", "err_u", "err_T", "rate_u", "rate_T"])?;
        for (i, r) in self.rows.iter().enumerate() {
            let rate = |v: &[f64]| if i == 0 { String::new() } else { format!("{:.6}", v[i - 1]) };
            w.write_record([
                i.to_string(),
                r.cells.to_string(),
                format!("{:e}", r.dt),
                format!("{:.6e}", r.err_u),
                format!("{:.6e}", r.err_t),
                rate(&self.rate_u),
                rate(&self.rate_t),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Consecutive-pair rates `log(ℰ_i/ℰ_{i+1}) / log(Δx_i/Δx_{i+1})`.
pub fn estimate_rates(rows: Vec<ConvergenceRow>) -> Result<ConvergenceReport> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("need at least two refinement levels".into()));
    }
    if rows.iter().any(|r| !(r.err_u > 0.0 && r.err_t > 0.0 && r.dx > 0.0)) {
        return Err(Error::InvalidArgument("errors and spacings must be positive".into()));
    }
    let dec = rows.windows(2).all(|w| w[1].dx < w[0].dx);
    let inc = rows.windows(2).all(|w| w[1].dx > w[0].dx);
    if !(dec || inc) {
        return Err(Error::InvalidArgument("grid spacing must be monotone".into()));
    }
    let rate = |e: fn(&ConvergenceRow) -> f64| -> Vec<f64> {
        rows.windows(2).map(|w| (e(&w[0]) / e(&w[1])).ln() / (w[0].dx / w[1].dx).ln()).collect()
    };
    let rate_u = rate(|r| r.err_u);
    let rate_t = rate(|r| r.err_t);
    Ok(ConvergenceReport { rows, rate_u, rate_t })
}

/// Energy time series, reported relative to the first sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub t: Vec<f64>,
    pub e: Vec<f64>,
}

impl EnergySeries {
    pub fn push(&mut self, t: f64, e: f64) {
        self.t.push(t);
        self.e.push(e);
    }

    /// `E/E₀` for every sample.
    pub fn ratio(&self) -> Vec<f64> {
        let e0 = self.e.first().copied().unwrap_or(1.0);
        self.e.iter().map(|e| e / e0).collect()
    }

    /// CSV with columns `t,E,E/E0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "E", "E/E0"])?;
        for ((t, e), r) in self.t.iter().zip(&self.e).zip(self.ratio()) {
            w.write_record([format!("{t:.6}"), format!("{e:.10e}"), format!("{r:.10e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Finite-difference residual `ρü − ∇·(C:∇u) − q` at `(x, t)` with central
/// differences of step `h` on the stress.
pub fn pde_residual(exact: &dyn AnalyticSolution, stiffness: &StiffnessTensor, rho: f64, x: &Point, t: f64, h: f64) -> Vector3<f64> {
    let d = exact.dim();
    let mut div = Vector3::zeros();
    for j in 0..d {
        let mut e = Point::zeros();
        e[j] = h;
        let sp = apply_to_gradient(stiffness, &exact.gradient(&(x + e), t));
        let sm = apply_to_gradient(stiffness, &exact.gradient(&(x - e), t));
        for i in 0..d {
            div[i] += (sp[(i, j)] - sm[(i, j)]) / (2.0 * h);
        }
    }
    exact.acceleration(x, t) * rho - div - exact.source(x, t)
}
