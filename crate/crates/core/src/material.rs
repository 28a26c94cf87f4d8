//! Stiffness tensors, densities and Hooke's law.
//!
//! A tensor is stored as a dense `D² × D²` matrix acting on the row-major
//! flattened displacement gradient, entry `((i·D + j), (k·D + l)) = C_ijkl`.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DomainBox, Grid, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct StiffnessTensor {
    dim: usize,
    values: Vec<f64>,
}

impl StiffnessTensor {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, values: vec![0.0; dim.pow(4)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let d = self.dim;
        (i * d + j) * d * d + k * d + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.idx(i, j, k, l);
        self.values[n] = v;
    }

    /// Entrywise difference `self − other`.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "stiffness dimensions differ");
        Self { dim: self.dim, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    /// Flattened `D² × D²` matrix (row-major).
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let n = self.dim * self.dim;
        DMatrix::from_row_slice(n, n, &self.values)
    }

    /// Traction coefficients for the unit normal `n`: the `D × D²` block
    /// mapping a flattened gradient `G` to `(C:G)·n`.
    pub fn traction_map(&self, n: &Point) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d * d);
        for i in 0..d {
            for kl in 0..d * d {
                let mut s = 0.0;
                for j in 0..d {
                    s += self.values[(i * d + j) * d * d + kl] * n[j];
                }
                out[(i, kl)] = s;
            }
        }
        out
    }

    /// Acoustic tensor `Γ_ik = C_ijkl n_j n_l`.
    pub fn acoustic_tensor(&self, n: &Point) -> Matrix3<f64> {
        let d = self.dim;
        let mut g = Matrix3::zeros();
        for i in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    for l in 0..d {
                        s += self.get(i, j, k, l) * n[j] * n[l];
                    }
                }
                g[(i, k)] = s;
            }
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn has_minor_symmetries(&self, tol: f64) -> bool {
        let d = self.dim;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let c = self.get(i, j, k, l);
                        if (c - self.get(j, i, k, l)).abs() > tol * scale || (c - self.get(i, j, l, k)).abs() > tol * scale {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn has_major_symmetry(&self, tol: f64) -> bool {
        let d = self.dim;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        if (self.get(i, j, k, l) - self.get(k, l, i, j)).abs() > tol * scale {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// `C'_ijkl = R_ia R_jb R_kc R_ld C_abcd`.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                for c in 0..d {
                                    for e in 0..d {
                                        s += r[(i, a)] * r[(j, b)] * r[(k, c)] * r[(l, e)] * self.get(a, b, c, e);
                                    }
                                }
                            }
                        }
                        out.set(i, j, k, l, s);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicParams {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mu > 0.0) || !(self.lambda + 2.0 * self.mu / dim as f64 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "isotropic parameters not positive definite: lambda = {}, mu = {}",
                self.lambda, self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseIsotropyParams {
    pub lambda: f64,
    pub lambda_par: f64,
    pub lambda_perp: f64,
    pub mu_par: f64,
    pub mu_perp: f64,
    pub axis: Vec<f64>,
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// `C_ijkl = λ δ_ij δ_kl + μ (δ_ik δ_jl + δ_il δ_jk)`. No validation, so the
/// zero tensor is representable.
pub fn isotropic_stiffness(params: IsotropicParams, dim: usize) -> StiffnessTensor {
    let IsotropicParams { lambda, mu } = params;
    let mut c = StiffnessTensor::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let v = lambda * delta(i, j) * delta(k, l) + mu * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k));
                    c.set(i, j, k, l, v);
                }
            }
        }
    }
    c
}

/// Transversely isotropic stiffness with symmetry axis `v`.
pub fn transversely_isotropic_stiffness(params: &TransverseIsotropyParams, dim: usize) -> Result<StiffnessTensor> {
    let v = &params.axis;
    if v.len() != dim {
        return Err(Error::InvalidArgument(format!("symmetry axis has {} components, expected {dim}", v.len())));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("symmetry axis must be a unit vector, |v| = {norm}")));
    }
    if !(params.mu_par > 0.0) || !(params.mu_perp > 0.0) {
        return Err(Error::InvalidArgument("shear parameters must be positive".into()));
    }
    let TransverseIsotropyParams { lambda, lambda_par: lp, lambda_perp: lq, mu_par: mp, mu_perp: mq, .. } = *params;
    let mut c = StiffnessTensor::zeros(dim);
    let d = delta;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let val = (lambda + lp) * d(i, j) * d(k, l) + mp * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
                        - lp * (d(i, j) * v[k] * v[l] + d(k, l) * v[i] * v[j])
                        + (mq - mp) * (d(i, k) * v[j] * v[l] + d(j, k) * v[i] * v[l] + d(i, l) * v[j] * v[k] + d(j, l) * v[i] * v[k])
                        + (lp + lq + 2.0 * mp - 2.0 * mq) * v[i] * v[j] * v[k] * v[l];
                    c.set(i, j, k, l, val);
                }
            }
        }
    }
    Ok(c)
}

/// `σ = C : ε(∇u)` with `ε = ½(∇u + ∇uᵀ)`; `grad_u[(i, j)] = ∂u_i/∂x_j`.
pub fn apply_hooke(c: &StiffnessTensor, grad_u: &Matrix3<f64>) -> Matrix3<f64> {
    let d = c.dim();
    let eps = (grad_u + grad_u.transpose()) * 0.5;
    let mut sigma = Matrix3::zeros();
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += c.get(i, j, k, l) * eps[(k, l)];
                }
            }
            sigma[(i, j)] = s;
        }
    }
    sigma
}

/// `σ = C : ∇u` on the full gradient, the form the discretization uses.
pub fn apply_to_gradient(c: &StiffnessTensor, grad_u: &Matrix3<f64>) -> Matrix3<f64> {
    let d = c.dim();
    let mut sigma = Matrix3::zeros();
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += c.get(i, j, k, l) * grad_u[(k, l)];
                }
            }
            sigma[(i, j)] = s;
        }
    }
    sigma
}

/// Quasi-1D filter: keep only the diagonal of the flattened `D² × D²`
/// matrix, i.e. the entries `C_ijij`. The filtered tensor decouples the
/// displacement components into independent scalar wave equations with
/// longitudinal speed `√(C_iiii/ρ)`.
pub fn quasi1d_filter(c: &StiffnessTensor) -> StiffnessTensor {
    let d = c.dim();
    let mut out = StiffnessTensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, i, j, c.get(i, j, i, j));
        }
    }
    out
}

/// Part of `C` used for traction continuity inside interaction regions:
/// the normal block `C_iikk` and the shear diagonal `C_ijij` (`i ≠ j`). The
/// dropped couplings `C_ijji` tie the two shear components together; without
/// them the subcell rotations are pinned and local systems stay regular on
/// Cartesian stars.
pub fn local_continuity_part(c: &StiffnessTensor) -> StiffnessTensor {
    let d = c.dim();
    let mut out = StiffnessTensor::zeros(d);
    for i in 0..d {
        for k in 0..d {
            out.set(i, i, k, k, c.get(i, i, k, k));
            if i != k {
                out.set(i, k, i, k, c.get(i, k, i, k));
            }
        }
    }
    out
}

/// Constitutive description of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MaterialModel {
    Isotropic {
        lambda: f64,
        mu: f64,
        #[serde(default)]
        quasi1d: bool,
    },
    TransverselyIsotropic {
        lambda: f64,
        lambda_par: f64,
        lambda_perp: f64,
        mu_par: f64,
        mu_perp: f64,
        axis: Vec<f64>,
    },
}

impl MaterialModel {
    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        MaterialModel::Isotropic { lambda, mu, quasi1d: false }
    }

    pub fn tensor(&self, dim: usize) -> Result<StiffnessTensor> {
        match self {
            MaterialModel::Isotropic { lambda, mu, quasi1d } => {
                let p = IsotropicParams { lambda: *lambda, mu: *mu };
                p.validate(dim)?;
                let c = isotropic_stiffness(p, dim);
                Ok(if *quasi1d { quasi1d_filter(&c) } else { c })
            }
            MaterialModel::TransverselyIsotropic { lambda, lambda_par, lambda_perp, mu_par, mu_perp, axis } => {
                transversely_isotropic_stiffness(
                    &TransverseIsotropyParams {
                        lambda: *lambda,
                        lambda_par: *lambda_par,
                        lambda_perp: *lambda_perp,
                        mu_par: *mu_par,
                        mu_perp: *mu_perp,
                        axis: axis.clone(),
                    },
                    dim,
                )
            }
        }
    }
}

/// Tensor and density shared by a set of cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub stiffness: StiffnessTensor,
    pub density: f64,
}

/// Box region `ω` with its own material.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub bounds: DomainBox,
    pub material: Material,
}

/// Per-cell stiffness and density. Cells index into a small table of
/// distinct materials.
#[derive(Clone, Debug)]
pub struct StiffnessField {
    dim: usize,
    materials: Vec<Material>,
    cell_material: Vec<u32>,
}

impl StiffnessField {
    pub fn homogeneous(grid: &Grid, material: Material) -> Result<Self> {
        Self::from_regions(grid, material, &[])
    }

    /// Assign each cell to the first region containing its centre, or to the
    /// default material otherwise.
    pub fn from_regions(grid: &Grid, default: Material, regions: &[Region]) -> Result<Self> {
        let dim = grid.dim();
        let mut materials = vec![default];
        materials.extend(regions.iter().map(|r| r.material.clone()));
        for m in &materials {
            if m.stiffness.dim() != dim {
                return Err(Error::InvalidArgument("material dimension does not match the grid".into()));
            }
            if !(m.density > 0.0) {
                return Err(Error::InvalidArgument(format!("density must be positive, got {}", m.density)));
            }
        }
        let cell_material = grid
            .cell_centers()
            .iter()
            .map(|x| regions.iter().position(|r| r.bounds.contains(x, 0.0)).map_or(0, |p| p as u32 + 1))
            .collect();
        Ok(Self { dim, materials, cell_material })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn num_cells(&self) -> usize {
        self.cell_material.len()
    }
    pub fn stiffness(&self, cell: usize) -> &StiffnessTensor {
        &self.materials[self.cell_material[cell] as usize].stiffness
    }
    pub fn density(&self, cell: usize) -> f64 {
        self.materials[self.cell_material[cell] as usize].density
    }
    pub fn material_index(&self, cell: usize) -> usize {
        self.cell_material[cell] as usize
    }
    pub fn materials(&self) -> &[Material] {
        &self.materials
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(axis: nalgebra::Vector3<f64>, angle: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn isotropic_entries() {
        let c = isotropic_stiffness(IsotropicParams { lambda: 1.0, mu: 1.0 }, 3);
        assert_eq!(c.get(0, 0, 0, 0), 3.0);
        assert_eq!(c.get(0, 0, 1, 1), 1.0);
        assert_eq!(c.get(0, 1, 0, 1), 1.0);
        let z = isotropic_stiffness(IsotropicParams { lambda: 0.0, mu: 0.0 }, 2);
        assert_eq!(z.max_abs(), 0.0);
        let c = isotropic_stiffness(IsotropicParams { lambda: 0.01, mu: 0.01 }, 2);
        assert!((c.get(0, 0, 0, 0) - 0.03).abs() < 1e-17);
        assert!(c.has_minor_symmetries(0.0) && c.has_major_symmetry(0.0));
    }

    #[test]
    fn ti_table_values() {
        let p = TransverseIsotropyParams {
            lambda: 1.0,
            lambda_par: 5.0,
            lambda_perp: 5.0,
            mu_par: 1.0,
            mu_perp: 2.0,
            axis: vec![0.0, 0.0, 1.0],
        };
        let c = transversely_isotropic_stiffness(&p, 3).unwrap();
        assert_eq!(c.get(0, 0, 0, 0), 8.0);
        assert_eq!(c.get(2, 2, 2, 2), 10.0);
        assert!(c.has_minor_symmetries(0.0) && c.has_major_symmetry(0.0));
    }

    #[test]
    fn ti_rejects_non_unit_axis() {
        let p = TransverseIsotropyParams {
            lambda: 1.0,
            lambda_par: 1.0,
            lambda_perp: 1.0,
            mu_par: 1.0,
            mu_perp: 1.0,
            axis: vec![0.0, 0.0, 2.0],
        };
        assert!(matches!(transversely_isotropic_stiffness(&p, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ti_rotation_oracle() {
        // Build C for v = R e_z directly and by rotating the tensor for e_z.
        let r = rot(nalgebra::Vector3::new(1.0, 2.0, -0.5), 0.7);
        let base = TransverseIsotropyParams {
            lambda: 1.3,
            lambda_par: 2.1,
            lambda_perp: 0.4,
            mu_par: 0.9,
            mu_perp: 1.7,
            axis: vec![0.0, 0.0, 1.0],
        };
        let c0 = transversely_isotropic_stiffness(&base, 3).unwrap();
        let v = r * nalgebra::Vector3::new(0.0, 0.0, 1.0);
        let rotated_axis = TransverseIsotropyParams { axis: vec![v.x, v.y, v.z], ..base.clone() };
        let direct = transversely_isotropic_stiffness(&rotated_axis, 3).unwrap();
        let by_rotation = c0.rotated(&r);
        for (a, b) in direct.values.iter().zip(&by_rotation.values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn hooke_examples() {
        let c = isotropic_stiffness(IsotropicParams { lambda: 1.0, mu: 1.0 }, 3);
        let mut g = Matrix3::zeros();
        g[(0, 0)] = 1.0;
        let s = apply_hooke(&c, &g);
        assert_eq!(s, Matrix3::from_diagonal(&nalgebra::Vector3::new(3.0, 1.0, 1.0)));
        let mut w = Matrix3::zeros();
        w[(0, 1)] = 2.0;
        w[(1, 0)] = -2.0;
        assert_eq!(apply_hooke(&c, &w), Matrix3::zeros());
        // ε = I: σ_ii = Dλ + 2μ
        let s = apply_hooke(&c, &Matrix3::identity());
        for i in 0..3 {
            assert_eq!(s[(i, i)], 5.0);
        }
        let c2 = isotropic_stiffness(IsotropicParams { lambda: 2.0, mu: 0.5 }, 2);
        let mut i2 = Matrix3::zeros();
        i2[(0, 0)] = 1.0;
        i2[(1, 1)] = 1.0;
        let s = apply_hooke(&c2, &i2);
        assert_eq!(s[(0, 0)], 2.0 * 2.0 + 1.0);
        assert_eq!(s[(2, 2)], 0.0);
    }

    #[test]
    fn quasi1d_filter_rules() {
        let c = isotropic_stiffness(IsotropicParams { lambda: 0.01, mu: 0.01 }, 2);
        let f = quasi1d_filter(&c);
        assert!((f.get(0, 0, 0, 0) - 0.03).abs() < 1e-17);
        assert_eq!(f.get(0, 0, 1, 1), 0.0);
        assert_eq!(f.get(0, 1, 0, 1), 0.01);
        assert_eq!(f.get(0, 1, 1, 0), 0.0);
        assert_eq!(quasi1d_filter(&f), f);
    }

    #[test]
    fn quasi1d_plane_wave_residual() {
        // ρ ü - ∇·(C:∇u) for u = [sin(t - x/c), 0], checked with central differences.
        let (lambda, mu, rho) = (0.01, 0.01, 1.0);
        let c = quasi1d_filter(&isotropic_stiffness(IsotropicParams { lambda, mu }, 2));
        let cp = ((lambda + 2.0 * mu) / rho).sqrt();
        let u = |x: f64, _y: f64, t: f64| [(t - x / cp).sin(), 0.0];
        let h = 1e-3;
        for &(x, y, t) in &[(0.1, 0.2, 0.3), (0.7, 0.4, 2.0), (0.5, 0.9, 11.0)] {
            let grad = |x: f64, y: f64| {
                let mut g = Matrix3::zeros();
                for i in 0..2 {
                    g[(i, 0)] = (u(x + h, y, t)[i] - u(x - h, y, t)[i]) / (2.0 * h);
                    g[(i, 1)] = (u(x, y + h, t)[i] - u(x, y - h, t)[i]) / (2.0 * h);
                }
                g
            };
            let sig = |x: f64, y: f64| apply_to_gradient(&c, &grad(x, y));
            for i in 0..2 {
                let div = (sig(x + h, y)[(i, 0)] - sig(x - h, y)[(i, 0)]) / (2.0 * h)
                    + (sig(x, y + h)[(i, 1)] - sig(x, y - h)[(i, 1)]) / (2.0 * h);
                let acc = (u(x, y, t + h)[i] - 2.0 * u(x, y, t)[i] + u(x, y, t - h)[i]) / (h * h);
                assert!((rho * acc - div).abs() < 1e-4, "residual {}", rho * acc - div);
            }
        }
    }

    #[test]
    fn region_assignment() {
        let g = crate::mesh::build_cartesian_grid(&DomainBox::unit(3), &[4, 4, 4]).unwrap();
        let iso = Material { stiffness: isotropic_stiffness(IsotropicParams { lambda: 1.0, mu: 1.0 }, 3), density: 1.0 };
        let inner = Material { stiffness: isotropic_stiffness(IsotropicParams { lambda: 2.0, mu: 2.0 }, 3), density: 2.0 };
        let f = StiffnessField::from_regions(
            &g,
            iso,
            &[Region { bounds: DomainBox::new(&[0.25; 3], &[0.75; 3]).unwrap(), material: inner }],
        )
        .unwrap();
        let n_inner = (0..g.num_cells()).filter(|&c| f.material_index(c) == 1).count();
        assert_eq!(n_inner, 8);
        assert!(f.density(0) == 1.0);
    }
}
