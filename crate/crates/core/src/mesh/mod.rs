//! Polyhedral grids with the topology and geometry needed by the multi-point
//! stress stencils: cell/face/vertex incidence, measures, centres, unit
//! normals, boundary tags and vertex-based stencil sets.

mod fracture;
mod generate;

pub use fracture::{split_fracture_faces, FractureTag};
pub use generate::{build_cartesian_grid, build_simplex_grid, build_simplex_grid_aligned, flips_for_normal, refine_uniform};

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points and vectors are stored in 3D; 2D grids keep `z = 0`.
pub type Point = Vector3<f64>;

/// Axis-aligned domain box in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || !(2..=3).contains(&lower.len()) {
            return Err(Error::InvalidArgument(format!(
                "domain box needs matching 2D or 3D corners, got {} and {} coordinates",
                lower.len(),
                upper.len()
            )));
        }
        for (a, (lo, hi)) in lower.iter().zip(upper).enumerate() {
            if !(hi - lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "degenerate domain box along axis {a}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower: lower.to_vec(), upper: upper.to_vec() })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lower[a] - tol && x[a] <= self.upper[a] + tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellShape {
    Triangle,
    Quad,
    Tetra,
    Hexa,
}

impl CellShape {
    pub fn dim(self) -> usize {
        match self {
            CellShape::Triangle | CellShape::Quad => 2,
            CellShape::Tetra | CellShape::Hexa => 3,
        }
    }

    pub fn num_nodes(self) -> usize {
        match self {
            CellShape::Triangle => 3,
            CellShape::Quad | CellShape::Tetra => 4,
            CellShape::Hexa => 8,
        }
    }

    /// Local face-to-node tables (VTK node ordering).
    fn local_faces(self) -> &'static [&'static [usize]] {
        match self {
            CellShape::Triangle => &[&[0, 1], &[1, 2], &[2, 0]],
            CellShape::Quad => &[&[0, 1], &[1, 2], &[2, 3], &[3, 0]],
            CellShape::Tetra => &[&[1, 2, 3], &[0, 3, 2], &[0, 1, 3], &[0, 2, 1]],
            CellShape::Hexa => &[
                &[0, 3, 2, 1],
                &[4, 5, 6, 7],
                &[0, 1, 5, 4],
                &[1, 2, 6, 5],
                &[2, 3, 7, 6],
                &[3, 0, 4, 7],
            ],
        }
    }

    pub fn vtk_type(self) -> u8 {
        match self {
            CellShape::Triangle => 5,
            CellShape::Quad => 9,
            CellShape::Tetra => 10,
            CellShape::Hexa => 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceTag {
    Interior,
    Boundary,
    /// One side of a split fracture face; topologically a boundary face.
    Fracture,
}

/// Side of the domain box a boundary face lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Side {
    pub const ALL: [Side; 6] = [Side::XMin, Side::XMax, Side::YMin, Side::YMax, Side::ZMin, Side::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Side::XMin | Side::XMax => 0,
            Side::YMin | Side::YMax => 1,
            Side::ZMin | Side::ZMax => 2,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Side::XMax | Side::YMax | Side::ZMax)
    }
}

/// How a grid was produced; uniform refinement regenerates from this.
#[derive(Clone, Debug, PartialEq)]
pub enum GridOrigin {
    Cartesian { domain: DomainBox, counts: Vec<usize> },
    Simplex { domain: DomainBox, counts: Vec<usize>, flips: Vec<bool> },
    /// Result of a topological edit (e.g. fracture splitting).
    Derived,
}

/// A face as produced by topology construction, before geometry.
#[derive(Clone, Debug)]
pub(crate) struct RawFace {
    pub nodes: Vec<usize>,
    pub cells: (usize, Option<usize>),
    pub tag: FaceTag,
}

/// Immutable polyhedral grid.
#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    shape: CellShape,
    nodes: Vec<Point>,
    cell_nodes: Vec<usize>,

    face_node_ptr: Vec<usize>,
    face_node_idx: Vec<usize>,
    face_cells: Vec<(usize, Option<usize>)>,
    face_tags: Vec<FaceTag>,
    face_sides: Vec<Option<Side>>,

    cell_face_ptr: Vec<usize>,
    cell_face_idx: Vec<usize>,
    cell_face_sign: Vec<f64>,

    cell_volumes: Vec<f64>,
    cell_centers: Vec<Point>,
    face_areas: Vec<f64>,
    face_centers: Vec<Point>,
    face_normals: Vec<Point>,

    node_cell_ptr: Vec<usize>,
    node_cell_idx: Vec<usize>,
    node_face_ptr: Vec<usize>,
    node_face_idx: Vec<usize>,

    boundary_faces: Vec<usize>,
    boundary_ordinal: Vec<Option<usize>>,

    domain: Option<DomainBox>,
    spacing: f64,
    origin: GridOrigin,
}

impl Grid {
    /// Build a grid from cell connectivity, discovering faces by shared nodes.
    pub fn from_cells(
        shape: CellShape,
        nodes: Vec<Point>,
        cell_nodes: Vec<usize>,
        domain: Option<DomainBox>,
        spacing: f64,
        origin: GridOrigin,
    ) -> Result<Self> {
        let nn = shape.num_nodes();
        if cell_nodes.is_empty() || cell_nodes.len() % nn != 0 {
            return Err(Error::InvalidArgument("cell connectivity length is not a multiple of the shape size".into()));
        }
        if let Some(&bad) = cell_nodes.iter().find(|&&n| n >= nodes.len()) {
            return Err(Error::InvalidArgument(format!("cell references unknown node {bad}")));
        }
        let num_cells = cell_nodes.len() / nn;
        let mut lookup: HashMap<Vec<usize>, usize> = HashMap::with_capacity(num_cells * 3);
        let mut faces: Vec<RawFace> = Vec::with_capacity(num_cells * 3);
        for c in 0..num_cells {
            let cn = &cell_nodes[c * nn..(c + 1) * nn];
            for local in shape.local_faces() {
                let fnodes: Vec<usize> = local.iter().map(|&i| cn[i]).collect();
                let mut key = fnodes.clone();
                key.sort_unstable();
                match lookup.get(&key) {
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.cells.1.is_some() {
                            return Err(Error::MeshGeneration(format!(
                                "face {key:?} shared by more than two cells"
                            )));
                        }
                        face.cells.1 = Some(c);
                        face.tag = FaceTag::Interior;
                    }
                    None => {
                        lookup.insert(key, faces.len());
                        faces.push(RawFace { nodes: fnodes, cells: (c, None), tag: FaceTag::Boundary });
                    }
                }
            }
        }
        Self::from_faces(shape, nodes, cell_nodes, faces, domain, spacing, origin)
    }

    pub(crate) fn from_faces(
        shape: CellShape,
        nodes: Vec<Point>,
        cell_nodes: Vec<usize>,
        faces: Vec<RawFace>,
        domain: Option<DomainBox>,
        spacing: f64,
        origin: GridOrigin,
    ) -> Result<Self> {
        let dim = shape.dim();
        let nn = shape.num_nodes();
        let num_cells = cell_nodes.len() / nn;
        let num_nodes = nodes.len();

        let vertex_mean: Vec<Point> = (0..num_cells)
            .map(|c| {
                let s: Point = cell_nodes[c * nn..(c + 1) * nn].iter().map(|&i| nodes[i]).sum();
                s / nn as f64
            })
            .collect();

        let mut face_node_ptr = Vec::with_capacity(faces.len() + 1);
        let mut face_node_idx = Vec::new();
        let mut face_cells = Vec::with_capacity(faces.len());
        let mut face_tags = Vec::with_capacity(faces.len());
        let mut face_areas = Vec::with_capacity(faces.len());
        let mut face_centers = Vec::with_capacity(faces.len());
        let mut face_normals = Vec::with_capacity(faces.len());
        face_node_ptr.push(0);
        for face in &faces {
            let mut fnodes = face.nodes.clone();
            let (area, center, mut normal) = face_geometry(dim, &nodes, &fnodes);
            if !(area > 0.0) {
                return Err(Error::MeshGeneration(format!("degenerate face {:?}", face.nodes)));
            }
            if normal.dot(&(center - vertex_mean[face.cells.0])) < 0.0 {
                normal = -normal;
                fnodes.reverse();
            }
            face_node_idx.extend_from_slice(&fnodes);
            face_node_ptr.push(face_node_idx.len());
            face_cells.push(face.cells);
            face_tags.push(face.tag);
            face_areas.push(area);
            face_centers.push(center);
            face_normals.push(normal);
        }

        // cell -> face incidence
        let mut counts = vec![0usize; num_cells];
        for &(c0, c1) in &face_cells {
            counts[c0] += 1;
            if let Some(c1) = c1 {
                counts[c1] += 1;
            }
        }
        let cell_face_ptr = prefix_sum(&counts);
        let mut fill = cell_face_ptr.clone();
        let mut cell_face_idx = vec![0usize; cell_face_ptr[num_cells]];
        let mut cell_face_sign = vec![0.0; cell_face_ptr[num_cells]];
        for (f, &(c0, c1)) in face_cells.iter().enumerate() {
            cell_face_idx[fill[c0]] = f;
            cell_face_sign[fill[c0]] = 1.0;
            fill[c0] += 1;
            if let Some(c1) = c1 {
                cell_face_idx[fill[c1]] = f;
                cell_face_sign[fill[c1]] = -1.0;
                fill[c1] += 1;
            }
        }

        // cell volumes and barycentres
        let mut cell_volumes = Vec::with_capacity(num_cells);
        let mut cell_centers = Vec::with_capacity(num_cells);
        for c in 0..num_cells {
            let p0 = vertex_mean[c];
            let mut vol = 0.0;
            let mut moment = Point::zeros();
            for k in cell_face_ptr[c]..cell_face_ptr[c + 1] {
                let f = cell_face_idx[k];
                let fnodes = &face_node_idx[face_node_ptr[f]..face_node_ptr[f + 1]];
                if dim == 2 {
                    let (a, b) = (nodes[fnodes[0]], nodes[fnodes[1]]);
                    let area = 0.5 * ((a - p0).cross(&(b - p0))).norm();
                    vol += area;
                    moment += area * (p0 + a + b) / 3.0;
                } else {
                    let cf = face_centers[f];
                    let m = fnodes.len();
                    for i in 0..m {
                        let a = nodes[fnodes[i]];
                        let b = nodes[fnodes[(i + 1) % m]];
                        let v = (cf - p0).dot(&(a - p0).cross(&(b - p0))).abs() / 6.0;
                        vol += v;
                        moment += v * (p0 + cf + a + b) / 4.0;
                    }
                }
            }
            if !(vol > 0.0) {
                return Err(Error::MeshGeneration(format!("cell {c} has non-positive volume")));
            }
            cell_volumes.push(vol);
            cell_centers.push(moment / vol);
        }

        // node -> cell and node -> face incidence
        let mut ncount = vec![0usize; num_nodes];
        for &n in &cell_nodes {
            ncount[n] += 1;
        }
        let node_cell_ptr = prefix_sum(&ncount);
        let mut fill = node_cell_ptr.clone();
        let mut node_cell_idx = vec![0usize; node_cell_ptr[num_nodes]];
        for c in 0..num_cells {
            for &n in &cell_nodes[c * nn..(c + 1) * nn] {
                node_cell_idx[fill[n]] = c;
                fill[n] += 1;
            }
        }
        let mut fcount = vec![0usize; num_nodes];
        for &n in &face_node_idx {
            fcount[n] += 1;
        }
        let node_face_ptr = prefix_sum(&fcount);
        let mut fill = node_face_ptr.clone();
        let mut node_face_idx = vec![0usize; node_face_ptr[num_nodes]];
        for f in 0..face_cells.len() {
            for &n in &face_node_idx[face_node_ptr[f]..face_node_ptr[f + 1]] {
                node_face_idx[fill[n]] = f;
                fill[n] += 1;
            }
        }

        let mut boundary_faces = Vec::new();
        let mut boundary_ordinal = vec![None; face_cells.len()];
        for (f, tag) in face_tags.iter().enumerate() {
            if *tag != FaceTag::Interior {
                boundary_ordinal[f] = Some(boundary_faces.len());
                boundary_faces.push(f);
            }
        }

        let face_sides = face_tags
            .iter()
            .enumerate()
            .map(|(f, tag)| match (tag, &domain) {
                (FaceTag::Boundary, Some(d)) => side_of(d, &face_centers[f], &face_normals[f], spacing),
                _ => None,
            })
            .collect();

        Ok(Self {
            dim,
            shape,
            nodes,
            cell_nodes,
            face_node_ptr,
            face_node_idx,
            face_cells,
            face_tags,
            face_sides,
            cell_face_ptr,
            cell_face_idx,
            cell_face_sign,
            cell_volumes,
            cell_centers,
            face_areas,
            face_centers,
            face_normals,
            node_cell_ptr,
            node_cell_idx,
            node_face_ptr,
            node_face_idx,
            boundary_faces,
            boundary_ordinal,
            domain,
            spacing,
            origin,
        })
    }

    pub(crate) fn raw_faces(&self) -> Vec<RawFace> {
        (0..self.num_faces())
            .map(|f| RawFace {
                nodes: self.face_nodes(f).to_vec(),
                cells: self.face_cells[f],
                tag: self.face_tags[f],
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn shape(&self) -> CellShape {
        self.shape
    }
    pub fn num_cells(&self) -> usize {
        self.cell_volumes.len()
    }
    pub fn num_faces(&self) -> usize {
        self.face_areas.len()
    }
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        let nn = self.shape.num_nodes();
        &self.cell_nodes[c * nn..(c + 1) * nn]
    }
    pub fn face_nodes(&self, f: usize) -> &[usize] {
        &self.face_node_idx[self.face_node_ptr[f]..self.face_node_ptr[f + 1]]
    }
    /// First (normal-defining) cell and optional second cell of face `f`.
    pub fn face_cells(&self, f: usize) -> (usize, Option<usize>) {
        self.face_cells[f]
    }
    pub fn face_tag(&self, f: usize) -> FaceTag {
        self.face_tags[f]
    }
    pub fn face_side(&self, f: usize) -> Option<Side> {
        self.face_sides[f]
    }
    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_tags[f] != FaceTag::Interior
    }
    /// Faces of cell `c` and the orientation sign (+1 when `n_f` points out of `c`).
    pub fn cell_faces(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.cell_face_ptr[c]..self.cell_face_ptr[c + 1];
        self.cell_face_idx[r.clone()].iter().copied().zip(self.cell_face_sign[r].iter().copied())
    }
    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_volumes[c]
    }
    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }
    pub fn cell_center(&self, c: usize) -> &Point {
        &self.cell_centers[c]
    }
    pub fn cell_centers(&self) -> &[Point] {
        &self.cell_centers
    }
    pub fn face_area(&self, f: usize) -> f64 {
        self.face_areas[f]
    }
    pub fn face_center(&self, f: usize) -> &Point {
        &self.face_centers[f]
    }
    pub fn face_centers(&self) -> &[Point] {
        &self.face_centers
    }
    pub fn face_normal(&self, f: usize) -> &Point {
        &self.face_normals[f]
    }
    pub fn node_cells(&self, n: usize) -> &[usize] {
        &self.node_cell_idx[self.node_cell_ptr[n]..self.node_cell_ptr[n + 1]]
    }
    pub fn node_faces(&self, n: usize) -> &[usize] {
        &self.node_face_idx[self.node_face_ptr[n]..self.node_face_ptr[n + 1]]
    }
    /// Boundary faces (outer boundary and fracture sides) in ordinal order.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }
    pub fn num_boundary_faces(&self) -> usize {
        self.boundary_faces.len()
    }
    pub fn boundary_ordinal(&self, f: usize) -> Option<usize> {
        self.boundary_ordinal[f]
    }
    pub fn domain(&self) -> Option<&DomainBox> {
        self.domain.as_ref()
    }
    /// Characteristic grid size Δx.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn origin(&self) -> &GridOrigin {
        &self.origin
    }

    /// `T_f`: cells sharing at least one vertex with face `f` (sorted).
    pub fn stencil_cells(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.face_nodes(f).iter().flat_map(|&n| self.node_cells(n).iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `F̃_f`: boundary faces sharing at least one vertex with face `f` (sorted).
    pub fn stencil_boundary_faces(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .face_nodes(f)
            .iter()
            .flat_map(|&n| self.node_faces(n).iter().copied())
            .filter(|&g| self.is_boundary_face(g))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Vertex to the first-cell centre (`d_L`) and to the second-cell centre
    /// (`d_R`, zero on boundary faces).
    pub fn face_cell_offsets(&self, f: usize) -> (Point, Point) {
        let (c0, c1) = self.face_cells[f];
        let xf = self.face_centers[f];
        let dl = self.cell_centers[c0] - xf;
        let dr = c1.map(|c| self.cell_centers[c] - xf).unwrap_or_else(Point::zeros);
        (dl, dr)
    }

    /// Index of the cell with the centre nearest to `x`.
    pub fn nearest_cell(&self, x: &Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, xc) in self.cell_centers.iter().enumerate() {
            let d = (xc - x).norm_squared();
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    /// Check the structural and geometric invariants, returning a description
    /// of the first violation.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12;
        for f in 0..self.num_faces() {
            let (c0, c1) = self.face_cells[f];
            match (self.face_tags[f], c1) {
                (FaceTag::Interior, None) => return Err(Error::MeshGeneration(format!("interior face {f} has one cell"))),
                (FaceTag::Boundary | FaceTag::Fracture, Some(_)) => {
                    return Err(Error::MeshGeneration(format!("boundary face {f} has two cells")))
                }
                _ => {}
            }
            if c1 == Some(c0) {
                return Err(Error::MeshGeneration(format!("face {f} adjacent twice to cell {c0}")));
            }
            if (self.face_normals[f].norm() - 1.0).abs() > tol {
                return Err(Error::MeshGeneration(format!("face {f} normal is not unit")));
            }
        }
        for c in 0..self.num_cells() {
            let mut closure = Point::zeros();
            let mut scale = 0.0;
            for (f, s) in self.cell_faces(c) {
                closure += s * self.face_areas[f] * self.face_normals[f];
                scale += self.face_areas[f];
            }
            if closure.norm() > tol * scale.max(1.0) {
                return Err(Error::MeshGeneration(format!("cell {c} is not closed: |sum| = {:e}", closure.norm())));
            }
        }
        if let Some(d) = &self.domain {
            let total: f64 = self.cell_volumes.iter().sum();
            if (total - d.measure()).abs() > 1e-12 * d.measure() {
                return Err(Error::MeshGeneration(format!(
                    "cell volumes sum to {total}, domain measure {}",
                    d.measure()
                )));
            }
        }
        Ok(())
    }
}

fn prefix_sum(counts: &[usize]) -> Vec<usize> {
    let mut ptr = Vec::with_capacity(counts.len() + 1);
    ptr.push(0);
    let mut acc = 0;
    for &c in counts {
        acc += c;
        ptr.push(acc);
    }
    ptr
}

/// Area, barycentre and unit normal (orientation from node order).
fn face_geometry(dim: usize, nodes: &[Point], fnodes: &[usize]) -> (f64, Point, Point) {
    if dim == 2 {
        let a = nodes[fnodes[0]];
        let b = nodes[fnodes[1]];
        let t = b - a;
        let len = t.norm();
        let n = Point::new(t.y, -t.x, 0.0) / len;
        return (len, (a + b) * 0.5, n);
    }
    let m = fnodes.len();
    if m == 3 {
        let (a, b, c) = (nodes[fnodes[0]], nodes[fnodes[1]], nodes[fnodes[2]]);
        let cr = (b - a).cross(&(c - a));
        let area = 0.5 * cr.norm();
        return (area, (a + b + c) / 3.0, cr / cr.norm());
    }
    let p0: Point = fnodes.iter().map(|&i| nodes[i]).sum::<Point>() / m as f64;
    let mut area_vec = Point::zeros();
    let mut area = 0.0;
    let mut moment = Point::zeros();
    for i in 0..m {
        let a = nodes[fnodes[i]];
        let b = nodes[fnodes[(i + 1) % m]];
        let cr = (a - p0).cross(&(b - p0));
        let ar = 0.5 * cr.norm();
        area_vec += cr;
        area += ar;
        moment += ar * (p0 + a + b) / 3.0;
    }
    (area, moment / area, area_vec / area_vec.norm())
}

fn side_of(domain: &DomainBox, x: &Point, n: &Point, spacing: f64) -> Option<Side> {
    let tol = 1e-9 * spacing.max(f64::MIN_POSITIVE);
    for side in Side::ALL {
        let a = side.axis();
        if a >= domain.dim() {
            continue;
        }
        let (bound, sgn) = if side.is_upper() { (domain.upper[a], 1.0) } else { (domain.lower[a], -1.0) };
        if (x[a] - bound).abs() <= tol && n[a] * sgn > 0.5 {
            return Some(side);
        }
    }
    None
}
