//! Analytic forward model for point dipoles in a homogeneous unit disk with
//! insulating (zero-flux) boundary, and assembly of the referenced system matrix.
//!
//! The potential of a dipole with moment `p` at `y` is `u(x) = −p·∇_y N(x, y)`
//! where `N` is the Neumann function of the Laplacian on the unit disk,
//!
//! ```text
//! N(x, y) = −(1/2π) (ln|x − y| + ln(|y|·|x − y/|y|²|))
//! ```
//!
//! Differentiating in `y` gives a closed form without the `1/|y|` singularity:
//!
//! ```text
//! u(x) = (1/2π) p·[ (y − x)/|x − y|² + (|x|² y − x)/(|x|²|y|² − 2 x·y + 1) ]
//! ```
//!
//! On the circle both terms coincide, so `u = (1/π) p·(y − x)/|x − y|²`.
//! Potentials are defined up to a constant; columns of the system matrix are
//! common-average referenced over the sensors.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{DiskGeometry, Point};

const BOUNDARY_TOL: f64 = 1e-9;

fn check_source(source: &Point) -> Result<()> {
    if !(source.norm() < 1.0) {
        return Err(Error::SourceOutsideDisk {
            point: [source.x, source.y],
        });
    }
    Ok(())
}

/// Potential at any point `x` of the closed disk (`x ≠ source`).
pub fn dipole_potential(source: &Point, moment: &Point, x: &Point) -> Result<f64> {
    check_source(source)?;
    if x.norm() > 1.0 + BOUNDARY_TOL {
        return Err(Error::InvalidArgument(format!(
            "evaluation point ({}, {}) is outside the disk",
            x.x, x.y
        )));
    }
    let d = source - x;
    let d2 = d.norm_squared();
    if d2 == 0.0 {
        return Err(Error::InvalidArgument(
            "potential evaluated at the dipole location".into(),
        ));
    }
    let x2 = x.norm_squared();
    let image_den = x2 * source.norm_squared() - 2.0 * x.dot(source) + 1.0;
    let image = source * x2 - x;
    Ok((moment.dot(&d) / d2 + moment.dot(&image) / image_den) / (2.0 * PI))
}

/// Potential on the unit circle generated by a dipole inside the disk.
pub fn dipole_boundary_potential(source: &Point, moment: &Point, boundary_point: &Point) -> Result<f64> {
    check_source(source)?;
    if (boundary_point.norm() - 1.0).abs() > BOUNDARY_TOL {
        return Err(Error::InvalidArgument(format!(
            "({}, {}) is not on the unit circle",
            boundary_point.x, boundary_point.y
        )));
    }
    let d = source - boundary_point;
    Ok(moment.dot(&d) / (PI * d.norm_squared()))
}

/// Subtracts the mean of `v` from every entry.
pub fn common_average_reference(v: &mut DVector<f64>) {
    if v.is_empty() {
        return;
    }
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

/// Referenced sensor potentials of one dipole.
pub fn forward_column(sensors: &[Point], source: &Point, moment: &Point) -> Result<DVector<f64>> {
    let mut col = DVector::zeros(sensors.len());
    for (i, s) in sensors.iter().enumerate() {
        col[i] = dipole_boundary_potential(source, moment, s)?;
    }
    common_average_reference(&mut col);
    Ok(col)
}

/// Forward operator `L` (m sensors × n nodes) tied to the geometry it came from.
#[derive(Clone, Debug)]
pub struct SystemMatrix {
    entries: DMatrix<f64>,
    geometry: Arc<DiskGeometry>,
}

impl SystemMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn geometry(&self) -> &Arc<DiskGeometry> {
        &self.geometry
    }

    pub fn sensor_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.entries.column(k).into_owned()
    }

    /// Same geometry with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SystemMatrix {
        SystemMatrix {
            entries: &self.entries * factor,
            geometry: Arc::clone(&self.geometry),
        }
    }
}

/// Column `k` holds the referenced boundary potentials of a unit dipole at
/// node `k` with that node's orientation.
pub fn assemble_system_matrix(geometry: Arc<DiskGeometry>) -> Result<SystemMatrix> {
    let m = geometry.sensor_count();
    let n = geometry.node_count();
    let mut entries = DMatrix::zeros(m, n);
    for (k, (node, moment)) in geometry.nodes().iter().zip(geometry.orientations()).enumerate() {
        let col = forward_column(geometry.sensors(), node, moment)?;
        if col.norm() == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "node {k} produces an all-zero referenced column"
            )));
        }
        entries.set_column(k, &col);
    }
    Ok(SystemMatrix { entries, geometry })
}

/// Orthonormal basis (m × (m−1)) of the zero-mean subspace, Helmert construction.
///
/// Referenced data carry no information along the all-ones direction, so
/// the localization problem effectively lives in these m − 1 coordinates.
pub fn reference_basis(m: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(m, m.saturating_sub(1));
    for j in 1..m {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            basis[(i, j - 1)] = 1.0 / norm;
        }
        basis[(j, j - 1)] = -(j as f64) / norm;
    }
    basis
}

/// Coordinates of referenced columns (or data) in the zero-mean subspace.
pub fn reduce_to_reference_subspace(a: &DMatrix<f64>) -> DMatrix<f64> {
    reference_basis(a.nrows()).transpose() * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_geometry, OrientationMode, SensorArc};

    fn on_circle(phi: f64) -> Point {
        Point::new(phi.cos(), phi.sin())
    }

    #[test]
    fn zero_moment_gives_zero_potential() {
        let src = Point::new(0.3, -0.1);
        for k in 0..12 {
            let v = dipole_boundary_potential(&src, &Point::zeros(), &on_circle(k as f64 * 0.5)).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn centered_x_dipole_is_antisymmetric() {
        let src = Point::zeros();
        let p = Point::new(1.0, 0.0);
        for k in 0..10 {
            let phi = 0.1 + 0.3 * k as f64;
            let a = dipole_boundary_potential(&src, &p, &Point::new(phi.cos(), phi.sin())).unwrap();
            let b = dipole_boundary_potential(&src, &p, &Point::new(-phi.cos(), phi.sin())).unwrap();
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_formula_matches_boundary_formula_on_circle() {
        let src = Point::new(-0.2, 0.55);
        let p = Point::new(0.6, 0.8);
        for k in 0..16 {
            let x = on_circle(0.4 * k as f64);
            let a = dipole_potential(&src, &p, &x).unwrap();
            let b = dipole_boundary_potential(&src, &p, &x).unwrap();
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_source_on_boundary() {
        let x = on_circle(0.0);
        assert!(matches!(
            dipole_boundary_potential(&Point::new(0.0, 1.0), &Point::new(0.0, 1.0), &x),
            Err(Error::SourceOutsideDisk { .. })
        ));
    }

    #[test]
    fn two_sensor_column_is_antisymmetric() {
        let geometry = DiskGeometry::new(
            vec![Point::new(0.2, 0.1), Point::new(-0.3, 0.4)],
            vec![on_circle(0.3), on_circle(2.0)],
            vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            0.1,
        )
        .unwrap();
        let l = assemble_system_matrix(Arc::new(geometry)).unwrap();
        for k in 0..2 {
            let c = l.column(k);
            assert!((c[0] + c[1]).abs() < 1e-15);
            assert!(c[0] != 0.0);
        }
    }

    #[test]
    fn columns_are_referenced_and_moments_scale_linearly() {
        let g = Arc::new(
            build_disk_geometry(60, 8, SensorArc::upper_half(), OrientationMode::Radial).unwrap(),
        );
        let l = assemble_system_matrix(Arc::clone(&g)).unwrap();
        for col in l.entries().column_iter() {
            assert!(col.sum().abs() < 1e-10);
        }
        let doubled: Vec<Point> = g.orientations().iter().map(|o| o * 2.0).collect();
        let src = g.nodes()[5];
        let c1 = forward_column(g.sensors(), &src, &g.orientations()[5]).unwrap();
        let c2 = forward_column(g.sensors(), &src, &doubled[5]).unwrap();
        assert!((c2 - c1 * 2.0).norm() < 1e-13);
    }

    #[test]
    fn referencing_is_idempotent() {
        let mut v = DVector::from_vec(vec![1.0, 5.0, -2.0, 0.25]);
        common_average_reference(&mut v);
        let once = v.clone();
        common_average_reference(&mut v);
        assert!((v - once).amax() < 1e-14);
    }

    #[test]
    fn reference_basis_is_orthonormal_and_zero_mean() {
        let u = reference_basis(7);
        let gram = u.transpose() * &u;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-14);
        for col in u.column_iter() {
            assert!(col.sum().abs() < 1e-14);
        }
    }
}
