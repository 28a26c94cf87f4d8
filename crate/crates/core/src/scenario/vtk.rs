//! Legacy ASCII VTK snapshots of cell fields.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{DomainBox, Grid, Point};
use crate::timestepper::WaveState;

use super::probe::{sample_line, ProbeSample};

fn write_vectors<W: Write>(w: &mut W, name: &str, dim: usize, v: &[f64]) -> Result<()> {
    writeln!(w, "VECTORS {name} double")?;
    for c in v.chunks(dim) {
        let z = if dim == 3 { c[2] } else { 0.0 };
        writeln!(w, "{:e} {:e} {:e}", c[0], c[1], z)?;
    }
    Ok(())
}

/// Write the grid with cell displacement, velocity and speed. The output is
/// a pure function of the inputs.
pub fn write_vtk<W: Write>(grid: &Grid, state: &WaveState, mut w: W) -> Result<()> {
    let d = grid.dim();
    crate::error::check_len(grid.num_cells() * d, state.u.len())?;
    crate::error::check_len(grid.num_cells() * d, state.v.len())?;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "elastic wave snapshot step {} t {:e}", state.n, state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", grid.num_nodes())?;
    for p in grid.nodes() {
        writeln!(w, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
    }
    let nc = grid.num_cells();
    let total: usize = (0..nc).map(|c| grid.cell_nodes(c).len() + 1).sum();
    writeln!(w, "CELLS {nc} {total}")?;
    for c in 0..nc {
        let nodes = grid.cell_nodes(c);
        write!(w, "{}", nodes.len())?;
        for n in nodes {
            write!(w, " {n}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "{}", grid.shape().vtk_type())?;
    }
    writeln!(w, "CELL_DATA {nc}")?;
    write_vectors(&mut w, "displacement", d, &state.u)?;
    write_vectors(&mut w, "velocity", d, &state.v)?;
    writeln!(w, "SCALARS velocity_magnitude double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in state.v.chunks(d) {
        writeln!(w, "{:e}", c.iter().map(|x| x * x).sum::<f64>().sqrt())?;
    }
    w.flush()?;
    Ok(())
}

/// [`write_vtk`] to a file.
pub fn write_vtk_snapshot(grid: &Grid, state: &WaveState, path: &Path) -> Result<()> {
    write_vtk(grid, state, BufWriter::new(File::create(path)?))
}

/// Snapshot read back from a file written by [`write_vtk`].
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSnapshot {
    pub dim: usize,
    pub points: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    /// Cell vector fields, always three components per cell.
    pub vectors: BTreeMap<String, Vec<f64>>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("malformed VTK snapshot: {}", msg.into()))
}

fn num<T: std::str::FromStr>(tok: Option<&str>) -> Result<T> {
    let s = tok.ok_or_else(|| parse_err("unexpected end of file"))?;
    s.parse().map_err(|_| parse_err(format!("bad number `{s}`")))
}

impl VtkSnapshot {
    pub fn parse(text: &str) -> Result<Self> {
        let mut tok = text.lines().skip(2).flat_map(str::split_whitespace);
        let (mut points, mut cells, mut types) = (Vec::new(), Vec::new(), Vec::new());
        let mut vectors = BTreeMap::new();
        let mut n_data = 0;
        while let Some(key) = tok.next() {
            match key {
                "ASCII" | "DATASET" | "UNSTRUCTURED_GRID" | "LOOKUP_TABLE" | "default" => {}
                "POINTS" => {
                    let n: usize = num(tok.next())?;
                    tok.next();
                    for _ in 0..n {
                        points.push(Point::new(num(tok.next())?, num(tok.next())?, num(tok.next())?));
                    }
                }
                "CELLS" => {
                    let n: usize = num(tok.next())?;
                    tok.next();
                    for _ in 0..n {
                        let k: usize = num(tok.next())?;
                        cells.push((0..k).map(|_| num(tok.next())).collect::<Result<Vec<usize>>>()?);
                    }
                }
                "CELL_TYPES" => {
                    let n: usize = num(tok.next())?;
                    types = (0..n).map(|_| num(tok.next())).collect::<Result<Vec<u8>>>()?;
                }
                "CELL_DATA" => n_data = num(tok.next())?,
                "VECTORS" => {
                    let name = tok.next().ok_or_else(|| parse_err("unnamed vector field"))?.to_string();
                    tok.next();
                    let v = (0..3 * n_data).map(|_| num(tok.next())).collect::<Result<Vec<f64>>>()?;
                    vectors.insert(name, v);
                }
                "SCALARS" => {
                    tok.next();
                    tok.next();
                    tok.next();
                    tok.next();
                    tok.next();
                    for _ in 0..n_data {
                        num::<f64>(tok.next())?;
                    }
                }
                other => return Err(parse_err(format!("unexpected token `{other}`"))),
            }
        }
        if cells.is_empty() || types.len() != cells.len() || n_data != cells.len() {
            return Err(parse_err("cell counts disagree"));
        }
        if cells.iter().flatten().any(|&n| n >= points.len()) {
            return Err(parse_err("cell refers to a missing point"));
        }
        let dim = if types.iter().all(|t| matches!(t, 5 | 9)) { 2 } else { 3 };
        Ok(Self { dim, points, cells, vectors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Vertex-average cell centres.
    pub fn cell_centers(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.iter().map(|&n| self.points[n]).sum::<Point>() / c.len() as f64).collect()
    }

    /// Bounding box of the points.
    pub fn bounds(&self) -> Result<DomainBox> {
        let (mut lo, mut hi) = (vec![f64::INFINITY; self.dim], vec![f64::NEG_INFINITY; self.dim]);
        for p in &self.points {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        DomainBox::new(&lo, &hi)
    }

    /// Sample the displacement magnitude along a line.
    pub fn probe(&self, from: &Point, to: &Point, samples: usize) -> Result<Vec<ProbeSample>> {
        let u = self.vectors.get("displacement").ok_or_else(|| parse_err("no displacement field"))?;
        let u: Vec<f64> = u.chunks(3).flat_map(|c| c[..self.dim].to_vec()).collect();
        sample_line(&self.cell_centers(), self.dim, &u, &self.bounds()?, from, to, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_grid;

    fn state(u: Vec<f64>, v: Vec<f64>) -> WaveState {
        let n = u.len();
        WaveState { t0: 0.0, t: 0.5, n: 5, u, v, a: vec![0.0; n], hist1: vec![], hist2: vec![] }
    }

    #[test]
    fn single_cell_file() {
        let grid = build_cartesian_grid(&DomainBox::unit(2), &[1, 1]).unwrap();
        let mut buf = Vec::new();
        write_vtk(&grid, &state(vec![1.0, 2.0], vec![3.0, 4.0]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 1 5"));
        assert!(text.contains("CELL_TYPES 1\n9\n"));
        assert!(text.contains("VECTORS displacement double\n1e0 2e0 0e0\n"));
        assert!(text.contains("LOOKUP_TABLE default\n5e0\n"));
        let snap = VtkSnapshot::parse(&text).unwrap();
        assert_eq!(snap.dim, 2);
        assert_eq!(snap.vectors["velocity"], vec![3.0, 4.0, 0.0]);
        assert!((snap.cell_centers()[0] - Point::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn output_is_deterministic_and_round_trips() {
        let grid = build_cartesian_grid(&DomainBox::unit(3), &[2, 3, 2]).unwrap();
        let n = grid.num_cells() * 3;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let write = || {
            let mut b = Vec::new();
            write_vtk(&grid, &state(u.clone(), u.clone()), &mut b).unwrap();
            b
        };
        let a = write();
        assert_eq!(a, write());
        let snap = VtkSnapshot::parse(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(snap.vectors["displacement"], u);
        assert_eq!(snap.cells.len(), grid.num_cells());
        let from = Point::new(0.05, 0.5, 0.3);
        let to = Point::new(0.95, 0.5, 0.3);
        let direct = super::super::probe::probe_line(&grid, &u, &from, &to, 6).unwrap();
        assert_eq!(snap.probe(&from, &to, 6).unwrap(), direct);
    }

    #[test]
    fn rejects_garbage() {
        assert!(VtkSnapshot::parse("# vtk\nx\nASCII\nPOINTS two double\n").is_err());
        assert!(VtkSnapshot::parse("# vtk\nx\nASCII\n").is_err());
    }
}
