//! Sampling a displacement field along a straight line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DomainBox, Grid, Point};

/// Displacement magnitude at arc length `s` from the line start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub s: f64,
    pub magnitude: f64,
}

fn nearest(centers: &[Point], x: &Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, xc) in centers.iter().enumerate() {
        let d = (xc - x).norm_squared();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Sample `|u|` at `samples` uniformly spaced points from `from` to `to`,
/// taking the value of the cell whose centre is nearest. Both endpoints must
/// lie inside `bounds`.
pub fn sample_line(
    centers: &[Point],
    dim: usize,
    u: &[f64],
    bounds: &DomainBox,
    from: &Point,
    to: &Point,
    samples: usize,
) -> Result<Vec<ProbeSample>> {
    crate::error::check_len(centers.len() * dim, u.len())?;
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("a probe needs at least 2 samples, got {samples}")));
    }
    if centers.is_empty() {
        return Err(Error::InvalidArgument("probe on an empty field".into()));
    }
    let tol = 1e-12 * (0..dim).map(|a| bounds.extent(a)).fold(0.0, f64::max);
    for p in [from, to] {
        if !bounds.contains(p, tol) {
            return Err(Error::InvalidArgument(format!("probe endpoint {:?} lies outside the domain", &p.as_slice()[..dim])));
        }
    }
    let length = (to - from).norm();
    Ok((0..samples)
        .map(|i| {
            let r = i as f64 / (samples - 1) as f64;
            let c = nearest(centers, &(from + (to - from) * r));
            let m = u[c * dim..(c + 1) * dim].iter().map(|x| x * x).sum::<f64>().sqrt();
            ProbeSample { s: r * length, magnitude: m }
        })
        .collect())
}

/// [`sample_line`] on a grid with a known domain box.
pub fn probe_line(grid: &Grid, u: &[f64], from: &Point, to: &Point, samples: usize) -> Result<Vec<ProbeSample>> {
    let bounds = grid.domain().ok_or_else(|| Error::InvalidArgument("probe needs a grid with a domain box".into()))?;
    sample_line(grid.cell_centers(), grid.dim(), u, bounds, from, to, samples)
}

/// Write `s,magnitude` rows.
pub fn write_probe_csv<W: Write>(samples: &[ProbeSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "magnitude"])?;
    for p in samples {
        w.write_record([format!("{:.12e}", p.s), format!("{:.12e}", p.magnitude)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_grid;

    #[test]
    fn samples_nearest_cells_along_the_line() {
        let grid = build_cartesian_grid(&DomainBox::unit(2), &[4, 1]).unwrap();
        // |u| = cell index
        let u: Vec<f64> = (0..4).flat_map(|c| [c as f64, 0.0]).collect();
        let p = probe_line(&grid, &u, &Point::new(0.0, 0.5, 0.0), &Point::new(1.0, 0.5, 0.0), 4).unwrap();
        let s: Vec<f64> = p.iter().map(|x| x.s).collect();
        assert!((s[3] - 1.0).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
        let m: Vec<f64> = p.iter().map(|x| x.magnitude).collect();
        assert_eq!(m, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn endpoint_outside_is_an_error() {
        let grid = build_cartesian_grid(&DomainBox::unit(2), &[2, 2]).unwrap();
        let u = vec![0.0; 8];
        let r = probe_line(&grid, &u, &Point::new(0.0, 0.5, 0.0), &Point::new(1.5, 0.5, 0.0), 10);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        let r = probe_line(&grid, &u, &Point::new(0.0, 0.5, 0.0), &Point::new(1.0, 0.5, 0.0), 1);
        assert!(r.is_err());
    }
}
