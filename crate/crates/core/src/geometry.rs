//! Unit-disk discretization: source nodes on a clipped Cartesian grid,
//! boundary sensors on an arc, and per-node dipole orientations.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Nodes must keep at least this distance from the unit circle.
pub const BOUNDARY_MARGIN: f64 = 1e-3;
const UNIT_TOL: f64 = 1e-12;

/// Angular interval `[start, end]` (radians) on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorArc {
    pub start: f64,
    pub end: f64,
}

impl SensorArc {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let arc = SensorArc { start, end };
        arc.validate()?;
        Ok(arc)
    }

    /// The upper half-circle, `φ ∈ [0, π]`.
    pub fn upper_half() -> Self {
        SensorArc { start: 0.0, end: PI }
    }

    pub fn full_circle() -> Self {
        SensorArc {
            start: 0.0,
            end: 2.0 * PI,
        }
    }

    pub fn span(&self) -> f64 {
        self.end - self.start
    }

    fn is_closed(&self) -> bool {
        (self.span() - 2.0 * PI).abs() < 1e-12
    }

    fn validate(&self) -> Result<()> {
        let span = self.span();
        if !span.is_finite() || span <= 1e-9 || span > 2.0 * PI + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "sensor arc [{}, {}] must have a span in (0, 2π]",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// Unit vector pointing at the middle of the arc.
    pub fn mid_direction(&self) -> Point {
        let mid = 0.5 * (self.start + self.end);
        Point::new(mid.cos(), mid.sin())
    }

    /// `count` equally spaced angles. Open arcs include both endpoints.
    pub fn angles(&self, count: usize) -> Vec<f64> {
        let step = if self.is_closed() {
            self.span() / count as f64
        } else {
            self.span() / (count - 1) as f64
        };
        (0..count).map(|i| self.start + step * i as f64).collect()
    }
}

impl Default for SensorArc {
    fn default() -> Self {
        SensorArc::upper_half()
    }
}

/// How unit dipole moments are assigned to nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    /// Pointing away from the disk center.
    #[default]
    Radial,
    /// Radial direction rotated by +90°.
    Tangential,
    /// The same direction `(cos θ, sin θ)` everywhere.
    FixedAngle(f64),
}

impl OrientationMode {
    pub fn orientation_at(&self, node: &Point) -> Result<Point> {
        match *self {
            OrientationMode::FixedAngle(theta) => Ok(Point::new(theta.cos(), theta.sin())),
            OrientationMode::Radial | OrientationMode::Tangential => {
                let r = node.norm();
                if r < 1e-12 {
                    return Err(Error::InvalidArgument(
                        "radial direction is undefined at the disk center".into(),
                    ));
                }
                let radial = node / r;
                Ok(match self {
                    OrientationMode::Radial => radial,
                    _ => Point::new(-radial.y, radial.x),
                })
            }
        }
    }
}

/// Source nodes, sensors and dipole orientations on the unit disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DiskGeometry {
    nodes: Vec<Point>,
    sensors: Vec<Point>,
    orientations: Vec<Point>,
    mesh_spacing: f64,
}

impl DiskGeometry {
    /// Builds a geometry from explicit parts, checking every invariant.
    pub fn new(
        nodes: Vec<Point>,
        sensors: Vec<Point>,
        orientations: Vec<Point>,
        mesh_spacing: f64,
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least 2 nodes required, got {}",
                nodes.len()
            )));
        }
        if sensors.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least 2 sensors required, got {}",
                sensors.len()
            )));
        }
        if orientations.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                context: "orientations per node",
                expected: nodes.len(),
                actual: orientations.len(),
            });
        }
        if !(mesh_spacing > 0.0) {
            return Err(Error::InvalidArgument("mesh spacing must be positive".into()));
        }
        for node in &nodes {
            if node.norm() >= 1.0 - BOUNDARY_MARGIN {
                return Err(Error::SourceOutsideDisk {
                    point: [node.x, node.y],
                });
            }
        }
        for s in &sensors {
            if (s.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "sensor ({}, {}) is not on the unit circle",
                    s.x, s.y
                )));
            }
        }
        for o in &orientations {
            if (o.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument("orientation is not a unit vector".into()));
            }
        }
        Ok(DiskGeometry {
            nodes,
            sensors,
            orientations,
            mesh_spacing,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn sensors(&self) -> &[Point] {
        &self.sensors
    }

    pub fn orientations(&self) -> &[Point] {
        &self.orientations
    }

    pub fn mesh_spacing(&self) -> f64 {
        self.mesh_spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Index of the node closest to `p` (first one on exact ties).
    pub fn nearest_node(&self, p: &Point) -> usize {
        nearest_index(&self.nodes, p)
    }

    /// Euclidean distance from `p` to the closest sensor.
    pub fn distance_to_sensors(&self, p: &Point) -> f64 {
        self.sensors
            .iter()
            .map(|s| (s - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no node coordinate of `self` appears exactly in `other`.
    pub fn shares_no_nodes_with(&self, other: &DiskGeometry) -> bool {
        !self
            .nodes
            .iter()
            .any(|a| other.nodes.iter().any(|b| a.x == b.x && a.y == b.y))
    }
}

pub(crate) fn nearest_index(points: &[Point], p: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = (q - p).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Cell-centered grid `((i + ½)h, (j + ½)h)` clipped to `|p| < 1 − margin`.
fn clipped_grid(pitch: f64) -> Vec<Point> {
    let limit = 1.0 - BOUNDARY_MARGIN;
    let half = (limit / pitch).ceil() as i64 + 1;
    let mut nodes = Vec::new();
    for j in -half..half {
        for i in -half..half {
            let p = Point::new((i as f64 + 0.5) * pitch, (j as f64 + 0.5) * pitch);
            if p.norm() < limit {
                nodes.push(p);
            }
        }
    }
    nodes
}

fn clipped_grid_count(pitch: f64) -> usize {
    let limit = 1.0 - BOUNDARY_MARGIN;
    let half = (limit / pitch).ceil() as i64 + 1;
    let mut count = 0;
    for j in -half..half {
        let y = (j as f64 + 0.5) * pitch;
        for i in -half..half {
            let x = (i as f64 + 0.5) * pitch;
            if (x * x + y * y).sqrt() < limit {
                count += 1;
            }
        }
    }
    count
}

/// Grid pitch whose clipped node count is closest to `target`.
///
/// Scans pitches within ±30 % of the area estimate `√(π r²/target)`; ties
/// go to the pitch closest to that estimate.
fn pitch_for_target(target: usize) -> f64 {
    let limit = 1.0 - BOUNDARY_MARGIN;
    let base = (PI * limit * limit / target as f64).sqrt();
    let mut best = (usize::MAX, usize::MAX, base);
    for step in 0..=3000i64 {
        for sign in [1i64, -1] {
            if step == 0 && sign < 0 {
                continue;
            }
            let k = sign * step;
            let pitch = base * (1.0 + k as f64 * 1e-4);
            let count = clipped_grid_count(pitch);
            let miss = count.abs_diff(target);
            if miss < best.0 {
                best = (miss, step as usize, pitch);
            }
        }
    }
    best.2
}

/// Regular Cartesian node grid inside the disk, sensors on `arc`.
///
/// The actual node count is the clipped-grid count closest to
/// `node_count_target`; `mesh_spacing` is the grid pitch.
pub fn build_disk_geometry(
    node_count_target: usize,
    sensor_count: usize,
    sensor_arc: SensorArc,
    orientation_mode: OrientationMode,
) -> Result<DiskGeometry> {
    if node_count_target < 2 {
        return Err(Error::InvalidArgument(format!(
            "node count target must be at least 2, got {node_count_target}"
        )));
    }
    if sensor_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "sensor count must be at least 2, got {sensor_count}"
        )));
    }
    sensor_arc.validate()?;

    let pitch = pitch_for_target(node_count_target);
    let nodes = clipped_grid(pitch);
    if nodes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid clipping left {} nodes for target {node_count_target}",
            nodes.len()
        )));
    }
    let sensors = sensor_arc
        .angles(sensor_count)
        .into_iter()
        .map(|phi| Point::new(phi.cos(), phi.sin()))
        .collect();
    let orientations = nodes
        .iter()
        .map(|n| orientation_mode.orientation_at(n))
        .collect::<Result<Vec<_>>>()?;
    DiskGeometry::new(nodes, sensors, orientations, pitch)
}
