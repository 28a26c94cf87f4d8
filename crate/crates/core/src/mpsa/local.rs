//! Local problems on the interaction region around one vertex.
//!
//! Unknowns are the full displacement gradients `G_K` of the subcells at the
//! vertex (row-major, `G[i·D + j] = ∂u_i/∂x_j`). Each subface contributes
//! `D` equations per side it closes:
//! - interior: traction continuity `(C_K:G_K)n = (C_L:G_L)n` and displacement
//!   continuity `u_K + G_K(x_s − x_K) = u_L + G_L(x_s − x_L)` at the
//!   continuity point `x_s`;
//! - Dirichlet: `u_K + G_K(x_f − x_K) = g`;
//! - Neumann: `(C:G_K)n = F`;
//! - Robin: `(C:G_K)n + R(u_K + G_K(x_f − x_K)) = F`.
//!
//! Within one material, `C:G_K` is replaced by `C_c:G_K + C_r:Ḡ`, where
//! `C_c` is the continuity part of the tensor (see `local_continuity_part`),
//! `C_r = C − C_c` and `Ḡ` is the subcell-volume average of the gradients
//! in the connected part of the star. Tractions are then single valued on
//! every subface and the local systems stay regular on Cartesian stars.
//!
//! Where traction-free faces meet (box corners and edges), local data cannot
//! fix a rigid rotation of the subcells; such systems are solved in the
//! minimum-norm sense, which leaves the tractions exact and sets the
//! undetermined rotation to zero in the displacement traces.

use nalgebra::{DMatrix, Matrix3};

use super::{BcKind, BoundarySpec, StressOperators, CONTINUITY_POINT, SINGULARITY_TOL};
use crate::error::{Error, Result};
use crate::material::{StiffnessField, StiffnessTensor};
use crate::mesh::Grid;

pub(super) struct Context<'a> {
    pub grid: &'a Grid,
    pub field: &'a StiffnessField,
    pub bc: &'a BoundarySpec,
    pub robin: &'a [Option<Matrix3<f64>>],
    /// Continuity part of each material's tensor.
    pub continuity: &'a [StiffnessTensor],
    /// Remainder `C − continuity part` of each material's tensor.
    pub remainder: &'a [StiffnessTensor],
}

/// How the stiffness enters the local equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    /// Continuity part on each subcell gradient plus the remainder on the
    /// volume-averaged gradient of the star. Tractions are single valued.
    Split,
    /// Full tensor on each subcell gradient.
    Full,
    /// Continuity part for continuity between cells of one material, full
    /// tensor across material interfaces and in the tractions. Keeps
    /// piecewise-linear fields exact where the full tensor is singular.
    Hybrid,
}

/// Traction operator of the subface of cell `cells[k0]` with normal `n` on
/// all subcell gradients of the star.
fn traction_rows(ctx: &Context<'_>, cells: &[usize], w: &[f64], k0: usize, n: &crate::mesh::Point, variant: Variant) -> DMatrix<f64> {
    let field = ctx.field;
    let d = field.dim();
    let d2 = d * d;
    let mut out = DMatrix::<f64>::zeros(d, cells.len() * d2);
    let c0 = cells[k0];
    if variant != Variant::Split {
        out.columns_mut(k0 * d2, d2).copy_from(&field.stiffness(c0).traction_map(n));
        return out;
    }
    out.columns_mut(k0 * d2, d2).copy_from(&ctx.continuity[field.material_index(c0)].traction_map(n));
    for (k, &c) in cells.iter().enumerate() {
        let r = ctx.remainder[field.material_index(c)].traction_map(n) * w[k];
        let mut blk = out.columns_mut(k * d2, d2);
        blk += r;
    }
    out
}

/// Subcell volume weights, normalized to sum one over each part of the star
/// that is connected through interior faces. Cells separated by a fracture
/// never share an averaged gradient.
fn star_weights(ctx: &Context<'_>, v: usize, cells: &[usize]) -> Vec<f64> {
    let g = ctx.grid;
    let mut part: Vec<usize> = (0..cells.len()).collect();
    fn root(part: &mut [usize], mut k: usize) -> usize {
        while part[k] != k {
            part[k] = part[part[k]];
            k = part[k];
        }
        k
    }
    for &f in g.node_faces(v) {
        if let (c0, Some(c1)) = g.face_cells(f) {
            let (a, b) = (cells.binary_search(&c0).unwrap(), cells.binary_search(&c1).unwrap());
            let (ra, rb) = (root(&mut part, a), root(&mut part, b));
            part[ra] = rb;
        }
    }
    let roots: Vec<usize> = (0..cells.len()).map(|k| root(&mut part, k)).collect();
    let vol: Vec<f64> = cells.iter().map(|&c| g.cell_volume(c) / g.cell_nodes(c).len() as f64).collect();
    let mut total = vec![0.0; cells.len()];
    for (k, &r) in roots.iter().enumerate() {
        total[r] += vol[k];
    }
    vol.iter().zip(&roots).map(|(v, &r)| v / total[r]).collect()
}

/// Contributions of one vertex. Column layout of every block: local cells
/// (`D` each) followed by local boundary faces (`D` each).
pub(super) struct VertexBlock {
    cells: Vec<usize>,
    bnd: Vec<usize>,
    faces: Vec<(usize, DMatrix<f64>)>,
    traces: Vec<(usize, DMatrix<f64>)>,
}

impl VertexBlock {
    pub fn scatter(&self, d: usize, ops: &mut StressOperators) -> Result<()> {
        let nc = self.cells.len();
        let add = |m: &mut crate::sparse::CsrMatrix, row: usize, blk: &DMatrix<f64>, i: usize, ids: &[usize], off: usize| {
            for (k, &g) in ids.iter().enumerate() {
                let pos = m
                    .find(row, g * d)
                    .ok_or_else(|| Error::Assembly(format!("entry ({row}, {}) outside the stencil pattern", g * d)))?;
                for j in 0..d {
                    *m.value_at_mut(pos + j) += blk[(i, (off + k) * d + j)];
                }
            }
            Ok::<(), Error>(())
        };
        for (f, blk) in &self.faces {
            for i in 0..d {
                add(&mut ops.stress, f * d + i, blk, i, &self.cells, 0)?;
                add(&mut ops.bound_stress, f * d + i, blk, i, &self.bnd, nc)?;
            }
        }
        for (b, blk) in &self.traces {
            for i in 0..d {
                add(&mut ops.trace_cell, b * d + i, blk, i, &self.cells, 0)?;
                add(&mut ops.trace_data, b * d + i, blk, i, &self.bnd, nc)?;
            }
        }
        Ok(())
    }
}

pub(super) fn solve_vertex(ctx: &Context<'_>, v: usize) -> Result<VertexBlock> {
    let (grid, bc) = (ctx.grid, ctx.bc);
    let d = grid.dim();
    let d2 = d * d;

    let mut cells = grid.node_cells(v).to_vec();
    cells.sort_unstable();
    let faces = grid.node_faces(v);
    let bnd: Vec<usize> = faces.iter().filter_map(|&f| grid.boundary_ordinal(f)).collect();
    let nc = cells.len();
    let ncol = (nc + bnd.len()) * d;
    let loc = |c: usize| cells.binary_search(&c).expect("face cell not in vertex star");
    let bloc = |b: usize| bnd.iter().position(|&x| x == b).unwrap();
    let is_neumann = |f: usize| grid.boundary_ordinal(f).is_some_and(|b| *bc.kind(b) == BcKind::Neumann);

    let nun = nc * d2;
    let neq: usize = faces.iter().map(|&f| if grid.face_cells(f).1.is_some() { 2 * d } else { d }).sum();
    if neq != nun {
        return Err(Error::Unsupported(format!(
            "vertex {v}: interaction region has {neq} equations for {nun} unknowns"
        )));
    }

    let w = star_weights(ctx, v, &cells);
    // the averaged remainder is exact only within one material; on mixed
    // stars it is the last resort (fracture tips crossing a material
    // interface)
    let uniform = cells.iter().all(|&c| ctx.field.material_index(c) == ctx.field.material_index(cells[0]));
    let order: &[Variant] =
        if uniform { &[Variant::Split, Variant::Full] } else { &[Variant::Full, Variant::Hybrid, Variant::Split] };
    let (x, variant) = order
        .iter()
        .find_map(|&var| {
            let (a, rhs) = build_system(ctx, v, &cells, &bnd, &w, var);
            solve_lu(a, &rhs).map(|x| (x, var))
        })
        .map(Ok)
        .unwrap_or_else(|| {
            let mut last = None;
            for &var in order {
                let (a, rhs) = build_system(ctx, v, &cells, &bnd, &w, var);
                match solve_min_norm(ctx, v, &cells, a, &rhs) {
                    Ok(x) => return Ok((x, var)),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one variant"))
        })?;
    let grads: Vec<DMatrix<f64>> = (0..nc).map(|k| x.rows(k * d2, d2).into_owned()).collect();

    let mut out_faces = Vec::with_capacity(faces.len());
    let mut out_traces = Vec::with_capacity(bnd.len());
    for &f in faces {
        let area = grid.face_area(f);
        let sub = area / grid.face_nodes(f).len() as f64;
        let c0 = grid.face_cells(f).0;
        let k0 = loc(c0);
        let b = grid.boundary_ordinal(f);
        let mut blk = DMatrix::<f64>::zeros(d, ncol);
        if is_neumann(f) {
            let dcol = (nc + bloc(b.unwrap())) * d;
            for i in 0..d {
                blk[(i, dcol + i)] = sub;
            }
        } else {
            blk = traction_rows(ctx, &cells, &w, k0, grid.face_normal(f), variant) * &x * sub;
        }
        out_faces.push((f, blk));

        if let Some(b) = b {
            let wt = sub / area;
            let mut tr = DMatrix::<f64>::zeros(d, ncol);
            if *bc.kind(b) == BcKind::Dirichlet {
                let dcol = (nc + bloc(b)) * d;
                for i in 0..d {
                    tr[(i, dcol + i)] = wt;
                }
            } else {
                let dd = grid.face_center(f) - grid.cell_center(c0);
                for i in 0..d {
                    tr[(i, k0 * d + i)] += wt;
                    for j in 0..d {
                        let gi = grads[k0].row(i * d + j) * (wt * dd[j]);
                        let mut ri = tr.row_mut(i);
                        ri += gi;
                    }
                }
            }
            out_traces.push((b, tr));
        }
    }
    Ok(VertexBlock { cells, bnd, faces: out_faces, traces: out_traces })
}

/// LU with partial pivoting; `None` when the smallest pivot falls below the
/// singularity tolerance relative to the largest entry.
fn solve_lu(a: DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.ncols();
    if n == 0 {
        return Some(DMatrix::zeros(0, rhs.ncols()));
    }
    let scale = a.amax();
    let lu = a.lu();
    let u = lu.u();
    let pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if scale > 0.0 && pivot >= SINGULARITY_TOL * scale {
        lu.solve(rhs)
    } else {
        None
    }
}

/// Minimum-norm solve of a singular local system. It is accepted only
/// when no traction that is computed from it (faces other than Neumann) sees
/// the null space, e.g. rigid rotations of subcells at traction-free corners;
/// the minimum-norm solution is then used.
fn solve_min_norm(ctx: &Context<'_>, v: usize, cells: &[usize], a: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (grid, field) = (ctx.grid, ctx.field);
    let d = grid.dim();
    let d2 = d * d;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let vt = svd.v_t.as_ref().expect("svd computed with V");
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > SINGULARITY_TOL * smax {
            continue;
        }
        let z = vt.row(i);
        for &f in grid.node_faces(v) {
            let neumann = grid.boundary_ordinal(f).is_some_and(|b| *ctx.bc.kind(b) == BcKind::Neumann);
            if neumann {
                continue;
            }
            let c0 = grid.face_cells(f).0;
            let k0 = cells.binary_search(&c0).unwrap();
            let tensor = field.stiffness(c0);
            let t = tensor.traction_map(grid.face_normal(f)) * z.columns(k0 * d2, d2).transpose();
            if t.amax() > 1e-8 * tensor.max_abs() {
                return Err(Error::Discretization { vertex: v, ratio: s / smax });
            }
        }
    }
    svd.solve(rhs, SINGULARITY_TOL * smax).map_err(|e| Error::Assembly(format!("vertex {v}: {e}")))
}


/// Equilibrated local matrix and right-hand sides for one variant.
fn build_system(
    ctx: &Context<'_>,
    v: usize,
    cells: &[usize],
    bnd: &[usize],
    w: &[f64],
    variant: Variant,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (grid, field, bc) = (ctx.grid, ctx.field, ctx.bc);
    let d = grid.dim();
    let d2 = d * d;
    let xv = grid.nodes()[v];
    let faces = grid.node_faces(v);
    let nc = cells.len();
    let ncol = (nc + bnd.len()) * d;
    let nun = nc * d2;
    let loc = |c: usize| cells.binary_search(&c).expect("face cell not in vertex star");
    let bloc = |b: usize| bnd.iter().position(|&x| x == b).unwrap();
    let neq = nun;
    let mut a = DMatrix::<f64>::zeros(neq, nun);
    let mut rhs = DMatrix::<f64>::zeros(neq, ncol);
    let mut row = 0;
    for &f in faces {
        let n = grid.face_normal(f);
        let xf = grid.face_center(f);
        let (c0, c1) = grid.face_cells(f);
        let k0 = loc(c0);
        if let Some(c1) = c1 {
            let k1 = loc(c1);
            let (a0, a1) = (k0 * d2, k1 * d2);
            // the averaged remainder is shared by both sides and cancels
            let (m0, m1) = (field.material_index(c0), field.material_index(c1));
            let (s0, s1) = match variant {
                Variant::Split => (ctx.continuity[m0].traction_map(n), ctx.continuity[m1].traction_map(n)),
                Variant::Hybrid if m0 == m1 => {
                    let s = ctx.continuity[m0].traction_map(n);
                    (s.clone(), s)
                }
                _ => (field.stiffness(c0).traction_map(n), field.stiffness(c1).traction_map(n)),
            };
            for i in 0..d {
                for kl in 0..d2 {
                    a[(row + i, a0 + kl)] += s0[(i, kl)];
                    a[(row + i, a1 + kl)] -= s1[(i, kl)];
                }
            }
            row += d;
            let xs = xf + (xv - xf) * CONTINUITY_POINT;
            let (d0, d1) = (xs - grid.cell_center(c0), xs - grid.cell_center(c1));
            for i in 0..d {
                for j in 0..d {
                    a[(row + i, a0 + i * d + j)] += d0[j];
                    a[(row + i, a1 + i * d + j)] -= d1[j];
                }
                rhs[(row + i, k0 * d + i)] = -1.0;
                rhs[(row + i, k1 * d + i)] = 1.0;
            }
            row += d;
        } else {
            let b = grid.boundary_ordinal(f).unwrap();
            let a0 = k0 * d2;
            let dcol = (nc + bloc(b)) * d;
            let dd = xf - grid.cell_center(c0);
            match bc.kind(b) {
                BcKind::Dirichlet => {
                    for i in 0..d {
                        for j in 0..d {
                            a[(row + i, a0 + i * d + j)] = dd[j];
                        }
                        rhs[(row + i, k0 * d + i)] = -1.0;
                    }
                }
                BcKind::Neumann => {
                    a.rows_mut(row, d).copy_from(&traction_rows(ctx, cells, w, k0, n, variant));
                }
                BcKind::Robin(_) | BcKind::Absorbing => {
                    let r = ctx.robin[b].expect("robin weight resolved");
                    a.rows_mut(row, d).copy_from(&traction_rows(ctx, cells, w, k0, n, variant));
                    for i in 0..d {
                        for k in 0..d {
                            for j in 0..d {
                                a[(row + i, a0 + k * d + j)] += r[(i, k)] * dd[j];
                            }
                            rhs[(row + i, k0 * d + k)] = -r[(i, k)];
                        }
                    }
                }
            }
            for i in 0..d {
                rhs[(row + i, dcol + i)] = 1.0;
            }
            row += d;
        }
    }

    // row equilibration, then LU with partial pivoting
    for r in 0..neq {
        let s = a.row(r).amax();
        if s > 0.0 {
            a.row_mut(r).scale_mut(1.0 / s);
            rhs.row_mut(r).scale_mut(1.0 / s);
        }
    }
    (a, rhs)
}