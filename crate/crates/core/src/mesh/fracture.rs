use super::{FaceTag, Grid, GridOrigin, Point, RawFace};
use crate::error::{Error, Result};

/// Matched face pairs produced by splitting internal faces on a fracture.
/// Each pair is `(kept, duplicate)`: the kept face stays attached to its
/// first cell, the duplicate carries the opposite normal and the second cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FractureTag {
    pub pairs: Vec<(usize, usize)>,
}

impl FractureTag {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
    pub fn contains(&self, f: usize) -> bool {
        self.pairs.iter().any(|&(a, b)| a == f || b == f)
    }
}

struct PlanarPolygon {
    origin: Point,
    normal: Point,
    axes: (Point, Point),
    coords: Vec<(f64, f64)>,
}

impl PlanarPolygon {
    fn new(dim: usize, vertices: &[Point]) -> Result<Self> {
        if dim == 2 {
            if vertices.len() != 2 {
                return Err(Error::InvalidArgument("a 2D fracture is a segment given by two points".into()));
            }
            let t = vertices[1] - vertices[0];
            let len = t.norm();
            if !(len > 0.0) {
                return Err(Error::InvalidArgument("degenerate fracture segment".into()));
            }
            let t = t / len;
            return Ok(Self {
                origin: vertices[0],
                normal: Point::new(t.y, -t.x, 0.0),
                axes: (t, Point::zeros()),
                coords: vec![(0.0, 0.0), (len, 0.0)],
            });
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("a fracture polygon needs at least three vertices".into()));
        }
        let m = vertices.len();
        let mut nsum = Point::zeros();
        for i in 0..m {
            nsum += vertices[i].cross(&vertices[(i + 1) % m]);
        }
        let scale = vertices.iter().map(|v| (v - vertices[0]).norm()).fold(0.0, f64::max);
        if nsum.norm() <= 1e-12 * scale * scale {
            return Err(Error::InvalidArgument("fracture polygon has zero area".into()));
        }
        let normal = nsum.normalize();
        let origin = vertices[0];
        for v in vertices {
            if (v - origin).dot(&normal).abs() > 1e-9 * scale {
                return Err(Error::InvalidArgument("fracture polygon is not planar".into()));
            }
        }
        let e1 = (vertices[1] - origin).normalize();
        let e2 = normal.cross(&e1);
        let coords = vertices.iter().map(|v| ((v - origin).dot(&e1), (v - origin).dot(&e2))).collect();
        Ok(Self { origin, normal, axes: (e1, e2), coords })
    }

    fn contains(&self, dim: usize, x: &Point, tol: f64) -> bool {
        let d = x - self.origin;
        if d.dot(&self.normal).abs() > tol {
            return false;
        }
        let (s, t) = (d.dot(&self.axes.0), d.dot(&self.axes.1));
        if dim == 2 {
            return s >= -tol && s <= self.coords[1].0 + tol;
        }
        // crossing-number test in plane coordinates
        let m = self.coords.len();
        let mut inside = false;
        for i in 0..m {
            let (xi, yi) = self.coords[i];
            let (xj, yj) = self.coords[(i + 1) % m];
            if (yi > t) != (yj > t) && s < (xj - xi) * (t - yi) / (yj - yi) + xi {
                inside = !inside;
            }
        }
        inside
    }
}

/// Duplicate every internal face lying on the fracture polygon into two
/// boundary faces, one per side.
pub fn split_fracture_faces(grid: &Grid, polygon: &[Point]) -> Result<(Grid, FractureTag)> {
    let dim = grid.dim();
    let plane = PlanarPolygon::new(dim, polygon)?;
    let tol = 1e-9 * grid.spacing();
    let mut faces: Vec<RawFace> = grid.raw_faces();
    let mut pairs = Vec::new();
    let original = faces.len();
    for f in 0..original {
        if faces[f].tag != FaceTag::Interior {
            continue;
        }
        if grid.face_normal(f).dot(&plane.normal).abs() < 1.0 - 1e-9 {
            continue;
        }
        if !plane.contains(dim, grid.face_center(f), tol) {
            continue;
        }
        let (c0, c1) = faces[f].cells;
        let c1 = c1.expect("interior face has two cells");
        faces[f].cells = (c0, None);
        faces[f].tag = FaceTag::Fracture;
        let mut nodes = faces[f].nodes.clone();
        nodes.reverse();
        pairs.push((f, faces.len()));
        faces.push(RawFace { nodes, cells: (c1, None), tag: FaceTag::Fracture });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyFracture);
    }
    let nn = grid.shape().num_nodes();
    let cell_nodes: Vec<usize> = (0..grid.num_cells()).flat_map(|c| grid.cell_nodes(c).to_vec()).collect();
    debug_assert_eq!(cell_nodes.len(), nn * grid.num_cells());
    let split = Grid::from_faces(
        grid.shape(),
        grid.nodes().to_vec(),
        cell_nodes,
        faces,
        grid.domain().cloned(),
        grid.spacing(),
        GridOrigin::Derived,
    )?;
    Ok((split, FractureTag { pairs }))
}
