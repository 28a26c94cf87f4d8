//! Multi-point stress approximation.
//!
//! Face tractions are expressed as linear combinations of cell displacements
//! in the face stencil and of boundary data on nearby boundary faces. The
//! weights come from small local problems, one per grid vertex, over the
//! subcells meeting at that vertex.

mod local;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::error::{check_len, Error, Result};
use crate::material::{local_continuity_part, StiffnessField, StiffnessTensor};
use crate::mesh::{FaceTag, Grid, Point, Side};
use crate::par;
use crate::sparse::CsrMatrix;

/// Continuity point on interior subfaces, as a fraction of the way from the
/// face centre towards the vertex.
pub const CONTINUITY_POINT: f64 = 1.0 / 3.0;

/// Relative pivot threshold below which a local system counts as singular.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// Boundary condition kind of one boundary face.
#[derive(Clone, Debug, PartialEq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
    /// `(C:∇u)·n + R u = F` with weight `R` (upper-left `D × D` block used).
    Robin(Matrix3<f64>),
    /// First-order absorbing condition, discretised as Robin with `𝒟_Δt`.
    Absorbing,
}

/// Time-dependent data `F(t, x)` on a boundary face.
pub type BoundaryFn = Arc<dyn Fn(f64, &Point) -> Vector3<f64> + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryData {
    Zero,
    Constant(Vector3<f64>),
    Function(BoundaryFn),
}

impl BoundaryData {
    pub fn eval(&self, t: f64, x: &Point) -> Vector3<f64> {
        match self {
            BoundaryData::Zero => Vector3::zeros(),
            BoundaryData::Constant(v) => *v,
            BoundaryData::Function(f) => f(t, x),
        }
    }

    pub fn function(f: impl Fn(f64, &Point) -> Vector3<f64> + Send + Sync + 'static) -> Self {
        BoundaryData::Function(Arc::new(f))
    }
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Zero => write!(f, "Zero"),
            BoundaryData::Constant(v) => write!(f, "Constant({:?})", v.as_slice()),
            BoundaryData::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Per-boundary-face condition kinds and data, indexed by boundary ordinal.
/// Fracture faces are always traction-free Neumann.
#[derive(Clone, Debug)]
pub struct BoundarySpec {
    dim: usize,
    faces: Vec<usize>,
    kinds: Vec<BcKind>,
    data: Vec<BoundaryData>,
}

impl BoundarySpec {
    /// The same kind with zero data on every outer face.
    pub fn uniform(grid: &Grid, kind: BcKind) -> Self {
        Self::by_side(grid, |_| (kind.clone(), BoundaryData::Zero))
    }

    /// Assign kind and data per side of the domain box. Boundary faces on no
    /// box side (fractures, non-box domains) become zero Neumann.
    pub fn by_side(grid: &Grid, mut assign: impl FnMut(Side) -> (BcKind, BoundaryData)) -> Self {
        let faces = grid.boundary_faces().to_vec();
        let mut kinds = Vec::with_capacity(faces.len());
        let mut data = Vec::with_capacity(faces.len());
        for &f in &faces {
            let (k, d) = match (grid.face_tag(f), grid.face_side(f)) {
                (FaceTag::Fracture, _) | (_, None) => (BcKind::Neumann, BoundaryData::Zero),
                (_, Some(side)) => assign(side),
            };
            kinds.push(k);
            data.push(d);
        }
        Self { dim: grid.dim(), faces, kinds, data }
    }

    /// Override one boundary face (by grid face index).
    pub fn set(&mut self, grid: &Grid, face: usize, kind: BcKind, data: BoundaryData) -> Result<()> {
        let b = grid
            .boundary_ordinal(face)
            .ok_or_else(|| Error::InvalidArgument(format!("face {face} is not a boundary face")))?;
        if grid.face_tag(face) == FaceTag::Fracture {
            return Err(Error::InvalidArgument("fracture faces are fixed to zero-traction Neumann".into()));
        }
        self.kinds[b] = kind;
        self.data[b] = data;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    /// Grid face index of boundary ordinal `b`.
    pub fn face(&self, b: usize) -> usize {
        self.faces[b]
    }
    pub fn kind(&self, b: usize) -> &BcKind {
        &self.kinds[b]
    }
    pub fn data(&self, b: usize) -> &BoundaryData {
        &self.data[b]
    }

    pub fn has_absorbing(&self) -> bool {
        self.kinds.iter().any(|k| *k == BcKind::Absorbing)
    }

    /// Raw data `F(t, x_f)` for all boundary faces, `D` entries per face.
    pub fn evaluate(&self, grid: &Grid, t: f64) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.faces.len() * d];
        for (b, &f) in self.faces.iter().enumerate() {
            let v = self.data[b].eval(t, grid.face_center(f));
            out[b * d..(b + 1) * d].copy_from_slice(&v.as_slice()[..d]);
        }
        out
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_len(grid.num_boundary_faces(), self.faces.len())?;
        if self.faces != grid.boundary_faces() {
            return Err(Error::InvalidArgument("boundary specification belongs to a different grid".into()));
        }
        Ok(())
    }
}

/// Impedance of one absorbing face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcFace {
    /// `𝒟`, kg m⁻² s⁻¹.
    pub impedance: Matrix3<f64>,
    /// `𝒟_Δt = 3/(2Δt) 𝒟`, kg m⁻² s⁻².
    pub scaled: Matrix3<f64>,
}

/// Absorbing-boundary weights for every absorbing face (by boundary ordinal).
#[derive(Clone, Debug, PartialEq)]
pub struct AbcWeight {
    dt: f64,
    faces: Vec<Option<AbcFace>>,
}

impl AbcWeight {
    /// No absorbing faces.
    pub fn none(num_boundary_faces: usize) -> Self {
        Self { dt: f64::NAN, faces: vec![None; num_boundary_faces] }
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn get(&self, b: usize) -> Option<&AbcFace> {
        self.faces[b].as_ref()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
}

/// Impedance `𝒟 = √(ρM) nnᵀ + √(ρμ_t)(I − nnᵀ)` from the acoustic tensor
/// of `c` along `n`, where `M` and `μ_t` are its normal and tangential
/// moduli. The acoustic tensor must be isotropic about `n`.
pub fn impedance_matrix(c: &StiffnessTensor, density: f64, n: &Point) -> Result<Matrix3<f64>> {
    let d = c.dim();
    let gamma = c.acoustic_tensor(n);
    let nn = n * n.transpose();
    let mut proj = -nn;
    for i in 0..d {
        proj[(i, i)] += 1.0;
    }
    let m = n.dot(&(gamma * n));
    let mu_t = (gamma.trace() - m) / (d as f64 - 1.0);
    let model = nn * m + proj * mu_t;
    let scale = gamma.abs().max();
    if (gamma - model).abs().max() > 1e-10 * scale {
        return Err(Error::Unsupported(
            "absorbing boundary requires an isotropic impedance (acoustic tensor not of the form M nnᵀ + μ(I − nnᵀ))"
                .into(),
        ));
    }
    if !(m > 0.0) || mu_t < 0.0 || !(density > 0.0) {
        return Err(Error::Unsupported("absorbing boundary needs positive wave moduli and density".into()));
    }
    Ok(nn * (density * m).sqrt() + proj * (density * mu_t).sqrt())
}

/// `𝒟` and `𝒟_Δt` for every absorbing face, from the material of its cell.
pub fn compute_abc_weights(grid: &Grid, field: &StiffnessField, bc: &BoundarySpec, dt: f64) -> Result<AbcWeight> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    bc.check_grid(grid)?;
    check_len(grid.num_cells(), field.num_cells())?;
    let mut faces = vec![None; bc.num_faces()];
    for (b, slot) in faces.iter_mut().enumerate() {
        if *bc.kind(b) != BcKind::Absorbing {
            continue;
        }
        let f = bc.face(b);
        let cell = grid.face_cells(f).0;
        let imp = impedance_matrix(field.stiffness(cell), field.density(cell), grid.face_normal(f))?;
        *slot = Some(AbcFace { impedance: imp, scaled: imp * (1.5 / dt) });
    }
    Ok(AbcWeight { dt, faces })
}

/// Sparse traction and trace operators.
///
/// Rows of `stress` / `bound_stress` hold integrated tractions `m_f T_f`
/// (`D` per face) oriented by the normal of the face, outward from its first
/// cell. `trace_cell` / `trace_data` give the displacement at boundary face
/// centres. Columns address cell displacements (`D` per cell) and boundary
/// data (`D` per boundary face, in boundary-ordinal order).
#[derive(Clone, Debug)]
pub struct StressOperators {
    pub dim: usize,
    pub stress: CsrMatrix,
    pub bound_stress: CsrMatrix,
    pub trace_cell: CsrMatrix,
    pub trace_data: CsrMatrix,
}

impl StressOperators {
    pub fn num_faces(&self) -> usize {
        self.stress.nrows() / self.dim
    }
    pub fn num_cells(&self) -> usize {
        self.stress.ncols() / self.dim
    }
    pub fn num_boundary_faces(&self) -> usize {
        self.bound_stress.ncols() / self.dim
    }
}

/// Build the MPSA operators. Absorbing faces are treated as Robin faces with
/// weight `𝒟_Δt` from `abc`.
pub fn discretize(grid: &Grid, field: &StiffnessField, bc: &BoundarySpec, abc: &AbcWeight) -> Result<StressOperators> {
    let d = grid.dim();
    bc.check_grid(grid)?;
    check_len(grid.num_cells(), field.num_cells())?;
    check_len(d, field.dim())?;
    check_len(bc.num_faces(), abc.num_faces())?;
    let robin: Vec<Option<Matrix3<f64>>> = (0..bc.num_faces())
        .map(|b| match bc.kind(b) {
            BcKind::Robin(r) => Ok(Some(*r)),
            BcKind::Absorbing => abc
                .get(b)
                .map(|w| Some(w.scaled))
                .ok_or_else(|| Error::InvalidArgument(format!("absorbing face {} has no weight", bc.face(b)))),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    let continuity: Vec<StiffnessTensor> = field.materials().iter().map(|m| local_continuity_part(&m.stiffness)).collect();
    let remainder: Vec<StiffnessTensor> =
        field.materials().iter().zip(&continuity).map(|(m, c)| m.stiffness.sub(c)).collect();
    let ctx = local::Context { grid, field, bc, robin: &robin, continuity: &continuity, remainder: &remainder };

    let (nf, nc, nb) = (grid.num_faces(), grid.num_cells(), grid.num_boundary_faces());
    let expand = |ids: Vec<usize>| -> Vec<u32> { ids.iter().flat_map(|&c| (0..d).map(move |i| (c * d + i) as u32)).collect() };
    let face_rows = |f: usize, data: bool| if data { expand(grid.stencil_boundary_faces(f).iter().map(|&g| grid.boundary_ordinal(g).unwrap()).collect()) } else { expand(grid.stencil_cells(f)) };
    let sorted = |mut v: Vec<u32>| {
        v.sort_unstable();
        v
    };
    let rows = |faces: &[usize], data: bool| -> Vec<Vec<u32>> {
        faces.iter().flat_map(|&f| std::iter::repeat(sorted(face_rows(f, data))).take(d)).collect()
    };
    let all: Vec<usize> = (0..nf).collect();
    let bnd = grid.boundary_faces();
    let mut ops = StressOperators {
        dim: d,
        stress: CsrMatrix::from_pattern(nf * d, nc * d, rows(&all, false))?,
        bound_stress: CsrMatrix::from_pattern(nf * d, nb * d, rows(&all, true))?,
        trace_cell: CsrMatrix::from_pattern(nb * d, nc * d, rows(bnd, false))?,
        trace_data: CsrMatrix::from_pattern(nb * d, nb * d, rows(bnd, true))?,
    };

    // Solve vertices in parallel batches, then scatter sequentially.
    const BATCH: usize = 2048;
    let nodes: Vec<usize> = (0..grid.num_nodes()).collect();
    for batch in nodes.chunks(BATCH) {
        let blocks = par::map_slice(batch, |&v| local::solve_vertex(&ctx, v));
        for block in blocks {
            block?.scatter(d, &mut ops)?;
        }
    }
    Ok(ops)
}

/// Integrated face tractions `STRESS u + BOUND_STRESS b`.
pub fn face_tractions(ops: &StressOperators, u_cells: &[f64], boundary_values: &[f64]) -> Result<Vec<f64>> {
    let mut t = ops.stress.mul_vec(u_cells)?;
    let tb = ops.bound_stress.mul_vec(boundary_values)?;
    t.iter_mut().zip(&tb).for_each(|(a, b)| *a += b);
    Ok(t)
}

/// Displacement at every boundary face centre.
pub fn boundary_displacement_trace(ops: &StressOperators, u_cells: &[f64], boundary_values: &[f64]) -> Result<Vec<f64>> {
    let mut t = ops.trace_cell.mul_vec(u_cells)?;
    let tb = ops.trace_data.mul_vec(boundary_values)?;
    t.iter_mut().zip(&tb).for_each(|(a, b)| *a += b);
    Ok(t)
}

/// Overwrite the absorbing entries of `data` (full boundary vector, `D` per
/// boundary face) with `𝒟_Δt(4/3 u^{n−1} − 1/3 u^{n−2}) + F_A`, where the
/// forcing is read from the same entries of `data` on input.
pub fn apply_abc_history(abc: &AbcWeight, dim: usize, hist1: &[f64], hist2: &[f64], data: &mut [f64]) -> Result<()> {
    let n = abc.num_faces() * dim;
    if hist1.len() != n || hist2.len() != n {
        return Err(Error::Initialization(format!(
            "boundary displacement history must hold {n} entries, got {} and {}",
            hist1.len(),
            hist2.len()
        )));
    }
    check_len(n, data.len())?;
    for b in 0..abc.num_faces() {
        if let Some(w) = abc.get(b) {
            let r = b * dim..(b + 1) * dim;
            let mut h = Vector3::zeros();
            for (i, k) in r.clone().enumerate() {
                h[i] = 4.0 / 3.0 * hist1[k] - 1.0 / 3.0 * hist2[k];
            }
            let add = w.scaled * h;
            for (i, k) in r.enumerate() {
                data[k] += add[i];
            }
        }
    }
    Ok(())
}

/// Boundary data on the absorbing faces alone: `𝒟_Δt(4/3 u^{n−1} − 1/3
/// u^{n−2}) + F_A`, zero elsewhere.
pub fn assemble_abc_rhs(abc: &AbcWeight, dim: usize, hist1: &[f64], hist2: &[f64], forcing: &[f64]) -> Result<Vec<f64>> {
    let n = abc.num_faces() * dim;
    check_len(n, forcing.len())?;
    let mut data = vec![0.0; n];
    for b in 0..abc.num_faces() {
        if abc.get(b).is_some() {
            data[b * dim..(b + 1) * dim].copy_from_slice(&forcing[b * dim..(b + 1) * dim]);
        }
    }
    apply_abc_history(abc, dim, hist1, hist2, &mut data)?;
    Ok(data)
}
