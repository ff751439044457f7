//! Serialization: JSON documents for geometry, matrices and manifests, CSV
//! tables for reconstructions, grids and trajectories.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting so identical results always produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SystemMatrix;
use crate::geometry::DiskGeometry;

pub const FORMAT_VERSION: u32 = 1;

/// Crate version recorded in every manifest.
pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Reads a dense matrix stored as a JSON array of equally long rows.
pub fn read_matrix_json(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)?;
    matrix_from_rows(&rows)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidArgument("matrix has no entries".into()));
    }
    for row in rows {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch {
                context: "matrix row length",
                expected: ncols,
                actual: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Self-describing geometry plus system matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryDocument {
    pub format_version: u32,
    pub mesh_spacing: f64,
    pub nodes: Vec<[f64; 2]>,
    pub orientations: Vec<[f64; 2]>,
    pub sensors: Vec<[f64; 2]>,
    /// Rows are sensors, columns are nodes.
    pub system_matrix: Vec<Vec<f64>>,
}

fn pairs(points: &[crate::geometry::Point]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

impl GeometryDocument {
    pub fn from_system(l: &SystemMatrix) -> Self {
        let g = l.geometry();
        GeometryDocument {
            format_version: FORMAT_VERSION,
            mesh_spacing: g.mesh_spacing(),
            nodes: pairs(g.nodes()),
            orientations: pairs(g.orientations()),
            sensors: pairs(g.sensors()),
            system_matrix: matrix_to_rows(l.entries()),
        }
    }

    pub fn system_matrix(&self) -> Result<DMatrix<f64>> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported geometry document version {}",
                self.format_version
            )));
        }
        matrix_from_rows(&self.system_matrix)
    }
}

/// CSV text with a header line.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        CsvTable {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Shortest round-trip representation; exponent form outside `[1e-5, 1e16)`.
pub fn fmt(v: f64) -> String {
    let mut s = String::new();
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        write!(s, "{v:e}")
    } else {
        write!(s, "{v}")
    }
    .expect("writing to a String cannot fail");
    s
}

/// `x,y,value` per node.
pub fn reconstruction_csv(geometry: &DiskGeometry, values: &DVector<f64>) -> CsvTable {
    let mut t = CsvTable::new(&["node", "x", "y", "value"]);
    for (k, (p, v)) in geometry.nodes().iter().zip(values.iter()).enumerate() {
        t.row(&[k.to_string(), fmt(p.x), fmt(p.y), fmt(*v)]);
    }
    t
}

/// Several named value columns on the same grid.
pub fn grid_csv(geometry: &DiskGeometry, columns: &[(&str, &[f64])]) -> CsvTable {
    let mut header = vec!["node", "x", "y"];
    header.extend(columns.iter().map(|(name, _)| *name));
    let mut t = CsvTable::new(&header);
    for (k, p) in geometry.nodes().iter().enumerate() {
        let mut row = vec![k.to_string(), fmt(p.x), fmt(p.y)];
        row.extend(columns.iter().map(|(_, vals)| fmt(vals[k])));
        t.row(&row);
    }
    t
}

/// Long format `t,node,value` for a sequence of state vectors.
pub fn trajectory_csv(times: &[f64], states: &[DVector<f64>]) -> CsvTable {
    let mut t = CsvTable::new(&["t", "node", "value"]);
    for (time, state) in times.iter().zip(states) {
        for (k, v) in state.iter().enumerate() {
            t.row(&[fmt(*time), k.to_string(), fmt(*v)]);
        }
    }
    t
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Output directory `<root>/<experiment>` that refuses to clobber earlier runs.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    /// Creates the directory. An existing non-empty directory is an error
    /// unless `overwrite` is set.
    pub fn prepare(root: &Path, experiment: &str, overwrite: bool) -> Result<Self> {
        let dir = root.join(experiment);
        if dir.exists() && !overwrite && fs::read_dir(&dir)?.next().is_some() {
            return Err(Error::OutputExists(dir));
        }
        fs::create_dir_all(&dir)?;
        Ok(OutputDir {
            dir,
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<PathBuf> {
        self.write_text(name, table.as_str())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config: &'a C,
    pub files: Vec<String>,
}
