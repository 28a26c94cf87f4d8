use super::{CellShape, DomainBox, Grid, GridOrigin, Point};
use crate::error::{Error, Result};

fn check_counts(domain: &DomainBox, counts: &[usize]) -> Result<()> {
    if counts.len() != domain.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} cell counts given for a {}D box",
            counts.len(),
            domain.dim()
        )));
    }
    if counts.iter().any(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!("cell counts must be >= 1, got {counts:?}")));
    }
    Ok(())
}

fn lattice(domain: &DomainBox, counts: &[usize]) -> Vec<Point> {
    let dim = domain.dim();
    let np: Vec<usize> = counts.iter().map(|n| n + 1).collect();
    let nz = if dim == 3 { np[2] } else { 1 };
    let mut nodes = Vec::with_capacity(np.iter().product());
    for k in 0..nz {
        for j in 0..np[1] {
            for i in 0..np[0] {
                let idx = [i, j, k];
                let mut p = Point::zeros();
                for a in 0..dim {
                    // exact endpoints keep boundary coordinates bit-identical
                    p[a] = if idx[a] == counts[a] {
                        domain.upper[a]
                    } else {
                        domain.lower[a] + domain.extent(a) * idx[a] as f64 / counts[a] as f64
                    };
                }
                nodes.push(p);
            }
        }
    }
    nodes
}

fn spacing_of(domain: &DomainBox, counts: &[usize]) -> f64 {
    (0..domain.dim()).map(|a| domain.extent(a) / counts[a] as f64).fold(0.0, f64::max)
}

/// Structured quadrilateral (2D) or hexahedral (3D) grid.
pub fn build_cartesian_grid(domain: &DomainBox, cells_per_axis: &[usize]) -> Result<Grid> {
    check_counts(domain, cells_per_axis)?;
    let dim = domain.dim();
    let nodes = lattice(domain, cells_per_axis);
    let (nx, ny) = (cells_per_axis[0], cells_per_axis[1]);
    let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut cells = Vec::new();
    let shape;
    if dim == 2 {
        shape = CellShape::Quad;
        for j in 0..ny {
            for i in 0..nx {
                cells.extend_from_slice(&[id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), id(i, j + 1, 0)]);
            }
        }
    } else {
        shape = CellShape::Hexa;
        let nz = cells_per_axis[2];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    cells.extend_from_slice(&[
                        id(i, j, k),
                        id(i + 1, j, k),
                        id(i + 1, j + 1, k),
                        id(i, j + 1, k),
                        id(i, j, k + 1),
                        id(i + 1, j, k + 1),
                        id(i + 1, j + 1, k + 1),
                        id(i, j + 1, k + 1),
                    ]);
                }
            }
        }
    }
    Grid::from_cells(
        shape,
        nodes,
        cells,
        Some(domain.clone()),
        spacing_of(domain, cells_per_axis),
        GridOrigin::Cartesian { domain: domain.clone(), counts: cells_per_axis.to_vec() },
    )
}

/// Structured simplex grid with roughly `target_size` spacing: each box cell
/// is split into 2 triangles or 6 tetrahedra.
pub fn build_simplex_grid(domain: &DomainBox, target_size: f64) -> Result<Grid> {
    if !(target_size > 0.0) || !target_size.is_finite() {
        return Err(Error::InvalidArgument(format!("target size must be positive, got {target_size}")));
    }
    let counts: Vec<usize> = (0..domain.dim())
        .map(|a| {
            let ratio = domain.extent(a) / target_size;
            if ratio < 1.0 - 1e-9 {
                Err(Error::InvalidArgument(format!(
                    "target size {target_size} exceeds the box extent {} along axis {a}",
                    domain.extent(a)
                )))
            } else {
                Ok(((ratio - 1e-9).ceil() as usize).max(1))
            }
        })
        .collect::<Result<_>>()?;
    build_simplex_grid_aligned(domain, &counts, &vec![false; domain.dim()])
}

/// Simplex grid with explicit counts and per-axis reflection of the split
/// pattern. Internal faces lie on the planes `ξ_a = ξ_b` of every box cell in
/// the (possibly reflected) local coordinates `ξ`, so a reflection selects
/// which family of diagonal planes the faces conform to.
pub fn build_simplex_grid_aligned(domain: &DomainBox, cells_per_axis: &[usize], flips: &[bool]) -> Result<Grid> {
    check_counts(domain, cells_per_axis)?;
    let dim = domain.dim();
    if flips.len() != dim {
        return Err(Error::InvalidArgument("one flip flag per axis required".into()));
    }
    let nodes = lattice(domain, cells_per_axis);
    let (nx, ny) = (cells_per_axis[0], cells_per_axis[1]);
    let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    // local lattice corner -> physical offset bit, honouring reflections
    let bit = |a: usize, xi: usize| if flips[a] { 1 - xi } else { xi };
    let mut cells = Vec::new();
    let shape;
    if dim == 2 {
        shape = CellShape::Triangle;
        let tris: [[[usize; 2]; 3]; 2] = [[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]];
        for j in 0..ny {
            for i in 0..nx {
                for tri in &tris {
                    for xi in tri {
                        cells.push(id(i + bit(0, xi[0]), j + bit(1, xi[1]), 0));
                    }
                }
            }
        }
    } else {
        shape = CellShape::Tetra;
        let nz = cells_per_axis[2];
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    for perm in &PERMS {
                        let mut xi = [0usize; 3];
                        let mut push = |xi: &[usize; 3]| {
                            cells.push(id(i + bit(0, xi[0]), j + bit(1, xi[1]), k + bit(2, xi[2])));
                        };
                        push(&xi);
                        for &a in perm {
                            xi[a] = 1;
                            push(&xi);
                        }
                    }
                }
            }
        }
    }
    Grid::from_cells(
        shape,
        nodes,
        cells,
        Some(domain.clone()),
        spacing_of(domain, cells_per_axis),
        GridOrigin::Simplex { domain: domain.clone(), counts: cells_per_axis.to_vec(), flips: flips.to_vec() },
    )
}

/// Reflection flags making simplex faces conform to planes with the given
/// normal. Axis-aligned normals need no reflection; a normal along a face
/// diagonal `±e_a ± e_b` needs axis `a` reflected when both signs agree.
pub fn flips_for_normal(dim: usize, normal: &Point) -> Result<Vec<bool>> {
    let n = normal / normal.norm();
    let nz: Vec<usize> = (0..dim).filter(|&a| n[a].abs() > 1e-9).collect();
    let mut flips = vec![false; dim];
    match nz.len() {
        1 => {}
        2 if (n[nz[0]].abs() - n[nz[1]].abs()).abs() < 1e-9 => {
            if n[nz[0]].signum() == n[nz[1]].signum() {
                flips[nz[0]] = true;
            }
        }
        _ => {
            return Err(Error::MeshGeneration(format!(
                "no structured simplex split conforms to planes with normal {:?}",
                n.as_slice()
            )))
        }
    }
    Ok(flips)
}

/// Halve every spacing parameter by regenerating from the grid's origin.
pub fn refine_uniform(grid: &Grid) -> Result<Grid> {
    match grid.origin() {
        GridOrigin::Cartesian { domain, counts } => {
            let c: Vec<usize> = counts.iter().map(|n| 2 * n).collect();
            build_cartesian_grid(domain, &c)
        }
        GridOrigin::Simplex { domain, counts, flips } => {
            let c: Vec<usize> = counts.iter().map(|n| 2 * n).collect();
            build_simplex_grid_aligned(domain, &c, flips)
        }
        GridOrigin::Derived => Err(Error::InvalidArgument(
            "grid was produced by a topological edit and cannot be regenerated; refine before editing".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_counts() {
        let g = build_cartesian_grid(&DomainBox::unit(2), &[32, 32]).unwrap();
        assert_eq!(g.num_cells(), 1024);
        g.validate().unwrap();
        let g = build_cartesian_grid(&DomainBox::new(&[0.0, -1.0, 2.0], &[2.0, 1.0, 3.0]).unwrap(), &[3, 2, 4]).unwrap();
        assert_eq!(g.num_cells(), 24);
        g.validate().unwrap();
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(build_cartesian_grid(&DomainBox::unit(2), &[0, 3]), Err(Error::InvalidArgument(_))));
        assert!(matches!(DomainBox::new(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_simplex_grid(&DomainBox::unit(2), 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_simplex_grid(&DomainBox::unit(2), 2.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn simplex_split_counts() {
        let g = build_simplex_grid(&DomainBox::unit(2), 1.0).unwrap();
        assert_eq!(g.num_cells(), 2);
        assert!((g.cell_volumes().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = build_simplex_grid(&DomainBox::unit(3), 0.25).unwrap();
        assert_eq!(g.num_cells(), 6 * 64);
        g.validate().unwrap();
        let r = refine_uniform(&g).unwrap();
        assert_eq!(r.num_cells(), 8 * g.num_cells());
        assert!((r.spacing() - 0.125).abs() < 1e-15);
        r.validate().unwrap();
    }

    #[test]
    fn reflected_split_is_conforming() {
        for flips in [[true, false, false], [false, true, true], [true, true, true]] {
            let g = build_simplex_grid_aligned(&DomainBox::unit(3), &[3, 2, 4], &flips).unwrap();
            g.validate().unwrap();
            // conformity: every face is shared by two cells or lies on the box
            for f in 0..g.num_faces() {
                if g.is_boundary_face(f) {
                    assert!(g.face_side(f).is_some(), "hanging face {f}");
                }
            }
        }
    }

    #[test]
    fn flips_select_diagonal_planes() {
        let f = flips_for_normal(3, &Point::new(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(f, vec![true, false, false]);
        let g = build_simplex_grid_aligned(&DomainBox::unit(3), &[5, 5, 5], &f).unwrap();
        let n = Point::new(1.0, 0.0, 1.0).normalize();
        let on_plane = (0..g.num_faces())
            .filter(|&f| (g.face_center(f)[0] + g.face_center(f)[2] - 1.0).abs() < 1e-12)
            .filter(|&f| g.face_normal(f).dot(&n).abs() > 1.0 - 1e-12)
            .count();
        // the plane x + z = 1 crosses 5 x 5 box cells, two triangles each
        assert_eq!(on_plane, 50);
        assert!(flips_for_normal(3, &Point::new(1.0, 2.0, 0.0)).is_err());
    }

    #[test]
    fn refine_square() {
        let g = build_cartesian_grid(&DomainBox::unit(2), &[1, 1]).unwrap();
        assert_eq!(refine_uniform(&g).unwrap().num_cells(), 4);
        let g = build_cartesian_grid(&DomainBox::unit(2), &[32, 32]).unwrap();
        assert!((refine_uniform(&g).unwrap().spacing() - 1.0 / 64.0).abs() < 1e-15);
    }
}
