//! Global system of the fully discrete model.
//!
//! Cell momentum balance with Newmark substitution gives
//! `(M/(βΔt²) − DIV·STRESS) u^n = rhs`, where `M` is the lumped mass
//! `ρ_K m_K` per component and `DIV` sums signed integrated face tractions
//! into cells. The matrix is constant for a fixed `Δt`, so it is factorized
//! once and reused every step.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::material::StiffnessField;
use crate::mesh::Grid;
use crate::mpsa::StressOperators;
use crate::sparse::CsrMatrix;

/// Relative residual every solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Sparse LU, factorized once.
    #[default]
    Direct,
    /// Jacobi-preconditioned BiCGSTAB.
    Iterative,
}

enum Factor {
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Jacobi(Vec<f64>),
}

/// System matrix, its factorization and the boundary-data coupling.
pub struct GlobalSystem {
    dim: usize,
    matrix: CsrMatrix,
    mass: Vec<f64>,
    div_bound: CsrMatrix,
    factor: Factor,
    factorizations: AtomicUsize,
    solves: AtomicUsize,
}

/// Signed sum of face rows into cell rows: `(DIV X)[K] = Σ_f sign(K,f) X[f]`,
/// times `factor`.
fn divergence(grid: &Grid, dim: usize, x: &CsrMatrix, factor: f64) -> CsrMatrix {
    x.combine_rows(grid.num_cells() * dim, |r| {
        let (c, i) = (r / dim, r % dim);
        grid.cell_faces(c).map(move |(f, s)| (f * dim + i, factor * s))
    })
}

/// Lumped mass `ρ_K m_K`, repeated per component.
pub fn lumped_mass(grid: &Grid, field: &StiffnessField) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.num_cells()).flat_map(|c| std::iter::repeat(field.density(c) * grid.cell_volume(c)).take(d)).collect()
}

/// Assemble `A = M/(βΔt²) − DIV·STRESS` and factorize it.
pub fn assemble_global(
    grid: &Grid,
    field: &StiffnessField,
    ops: &StressOperators,
    beta: f64,
    dt: f64,
    solver: SolverKind,
) -> Result<GlobalSystem> {
    if !(beta > 0.0 && dt > 0.0 && beta.is_finite() && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("need β > 0 and Δt > 0, got β = {beta}, Δt = {dt}")));
    }
    let d = grid.dim();
    check_len(grid.num_cells(), ops.num_cells())?;
    check_len(grid.num_faces(), ops.num_faces())?;
    let mass = lumped_mass(grid, field);
    let scale = 1.0 / (beta * dt * dt);
    let mut matrix = divergence(grid, d, &ops.stress, -1.0);
    for (i, m) in mass.iter().enumerate() {
        let pos = matrix.find(i, i).ok_or_else(|| Error::Assembly(format!("row {i} has no diagonal entry")))?;
        *matrix.value_at_mut(pos) += m * scale;
    }
    matrix.prune();
    let div_bound = divergence(grid, d, &ops.bound_stress, 1.0);
    let factor = factorize(&matrix, solver)?;
    Ok(GlobalSystem {
        dim: d,
        matrix,
        mass,
        div_bound,
        factor,
        factorizations: AtomicUsize::new(1),
        solves: AtomicUsize::new(0),
    })
}

fn factorize(a: &CsrMatrix, solver: SolverKind) -> Result<Factor> {
    match solver {
        SolverKind::Direct => {
            let trip: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
            let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows(), a.ncols(), &trip)
                .map_err(|e| Error::Assembly(format!("{e:?}")))?;
            let lu = m.sp_lu().map_err(|e| Error::Assembly(format!("sparse LU failed: {e:?}")))?;
            Ok(Factor::Lu(lu))
        }
        SolverKind::Iterative => {
            let diag = a.diagonal();
            if diag.iter().any(|&x| x == 0.0 || !x.is_finite()) {
                return Err(Error::Assembly("zero or non-finite diagonal entry".into()));
            }
            Ok(Factor::Jacobi(diag.iter().map(|x| 1.0 / x).collect()))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; rhs.len()];
    a.mul_vec_into(x, &mut r);
    r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
    r
}

/// Jacobi-preconditioned BiCGSTAB from a zero guess.
fn bicgstab(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let (mut y, mut z, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.mul_vec_into(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            x[i] += alpha * y[i];
            r[i] -= alpha * v[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        a.mul_vec_into(&z, &mut t);
        omega = dot(&t, &r) / dot(&t, &t);
        for i in 0..n {
            x[i] += omega * z[i];
            r[i] -= omega * t[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        if omega == 0.0 || !omega.is_finite() {
            break;
        }
    }
    let res = norm(&residual(a, &x, b)) / bnorm;
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::Solver(format!("BiCGSTAB stalled at relative residual {res:.3e}")))
    }
}

impl GlobalSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.mass.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Lumped mass `ρ_K m_K` per unknown.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `DIV·BOUND_STRESS`: boundary data to cell forces.
    pub fn boundary_coupling(&self) -> &CsrMatrix {
        &self.div_bound
    }

    /// Number of factorizations performed (one per system).
    pub fn factorization_count(&self) -> usize {
        self.factorizations.load(Ordering::Relaxed)
    }

    /// Number of completed solves.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Solve `A x = rhs` to relative residual [`RESIDUAL_TOL`].
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.size(), rhs.len())?;
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("right-hand side is not finite".into()));
        }
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            self.solves.fetch_add(1, Ordering::Relaxed);
            return Ok(vec![0.0; rhs.len()]);
        }
        let x = match &self.factor {
            Factor::Lu(lu) => {
                let mut x = self.lu_solve(lu, rhs);
                // a few refinement sweeps absorb pivoting round-off
                for _ in 0..3 {
                    let r = residual(&self.matrix, &x, rhs);
                    if norm(&r) <= RESIDUAL_TOL * bnorm {
                        break;
                    }
                    let dx = self.lu_solve(lu, &r);
                    x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                }
                x
            }
            Factor::Jacobi(inv) => bicgstab(&self.matrix, inv, rhs, RESIDUAL_TOL * 0.5, 20 * self.size().max(100))?,
        };
        let res = norm(&residual(&self.matrix, &x, rhs)) / bnorm;
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Solver(format!("relative residual {res:.3e} exceeds {RESIDUAL_TOL:e}")));
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(x)
    }

    fn lu_solve(&self, lu: &faer::sparse::linalg::solvers::Lu<usize, f64>, rhs: &[f64]) -> Vec<f64> {
        let mut b = faer::Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }
}
