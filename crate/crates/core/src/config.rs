//! Run configuration: JSON documents with defaults, validation and
//! command-line overrides.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientationMode, SensorArc};
use crate::io::read_matrix_json;
use crate::linalg::Covariance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Demo,
    Track,
    Hitmap,
    SnrSweep,
    Bound,
    ForwardDump,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Demo => "demo",
            Experiment::Track => "track",
            Experiment::Hitmap => "hitmap",
            Experiment::SnrSweep => "snr-sweep",
            Experiment::Bound => "bound",
            Experiment::ForwardDump => "forward-dump",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Node-count target of the grid used to simulate data.
    pub forward_nodes: usize,
    /// Node-count target of the reconstruction grid.
    pub inverse_nodes: usize,
    pub sensor_count: usize,
    pub sensor_arc: SensorArc,
    pub orientation: OrientationMode,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            forward_nodes: 650,
            inverse_nodes: 455,
            sensor_count: 16,
            sensor_arc: SensorArc::upper_half(),
            orientation: OrientationMode::Radial,
        }
    }
}

/// Prior covariance `Γ` over the reconstruction grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    /// `δ·I`.
    Scalar { delta: f64 },
    /// One variance per node.
    Diagonal { values: Vec<f64> },
    /// Dense SPD matrix stored as a JSON array of rows.
    MatrixFile { path: PathBuf },
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Scalar { delta: 1.0 }
    }
}

impl PriorSpec {
    /// Scale used for the Kalman initial covariance and process noise.
    pub fn mean_variance(&self, n: usize) -> Result<f64> {
        Ok(self.covariance(n)?.diagonal().mean())
    }

    pub fn covariance(&self, n: usize) -> Result<Covariance> {
        let cov = match self {
            PriorSpec::Scalar { delta } => Covariance::scaled(n, *delta),
            PriorSpec::Diagonal { values } => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: "model.prior.values vs. inverse node count",
                        expected: n,
                        actual: values.len(),
                    });
                }
                Covariance::Diagonal(DVector::from_vec(values.clone()))
            }
            PriorSpec::MatrixFile { path } => {
                let m = read_matrix_json(path).map_err(|e| e.context("model.prior.path"))?;
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::DimensionMismatch {
                        context: "model.prior matrix file vs. inverse node count",
                        expected: n,
                        actual: if m.nrows() != n { m.nrows() } else { m.ncols() },
                    });
                }
                Covariance::Dense(m)
            }
        };
        cov.validate().map_err(|e| e.context("model.prior"))?;
        Ok(cov)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub prior: PriorSpec,
    /// Data noise level in percent of the signal RMS.
    pub noise_percent: f64,
    /// Lower limit on the noise level assumed by the inverse model, so that
    /// noiseless data still yield a well-conditioned marginal covariance.
    pub min_model_noise_percent: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            prior: PriorSpec::default(),
            noise_percent: 5.0,
            min_model_noise_percent: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn model_noise_percent(&self, data_noise_percent: f64) -> f64 {
        data_noise_percent.max(self.min_model_noise_percent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub source: [f64; 2],
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { source: [0.2, 0.6] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Source driven by the forcing term.
    pub far_source: [f64; 2],
    pub near_source: [f64; 2],
    pub transition: [[f64; 2]; 2],
    pub steps: usize,
    pub dt: f64,
    /// First step (1-based, in units of `dt`) used for localization statistics.
    pub first_localized_step: usize,
    /// `Q = ratio · mean(diag Γ) · I` for the random-walk filters.
    pub process_noise_ratio: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            far_source: [0.0, -0.95],
            near_source: [-0.4, 0.8],
            transition: [[0.2, -0.3], [-0.8, 0.3]],
            steps: 25,
            dt: 1e-3,
            first_localized_step: 6,
            process_noise_ratio: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitmapConfig {
    pub noise_levels: Vec<f64>,
    pub samples: usize,
}

impl Default for HitmapConfig {
    fn default() -> Self {
        HitmapConfig {
            noise_levels: vec![5.0, 15.0],
            samples: 1000,
        }
    }
}

pub fn default_sweep_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    grid.extend((3..=20).map(|p| p as f64));
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub points: Vec<[f64; 2]>,
    pub noise_grid: Vec<f64>,
    pub samples: usize,
    pub divergence_threshold: f64,
    /// Target probability for the smallest-noise search over all nodes.
    pub bound_target: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            points: vec![[0.0, 0.9], [0.0, 0.8], [0.0, 0.7], [0.0, 0.6]],
            noise_grid: default_sweep_grid(),
            samples: 1000,
            divergence_threshold: 0.01,
            bound_target: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub node_at: [f64; 2],
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { node_at: [0.0, 0.9] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for Monte-Carlo loops; `None` uses available parallelism.
    pub workers: Option<usize>,
    pub overwrite: bool,
    pub geometry: GeometryConfig,
    pub model: ModelConfig,
    pub demo: DemoConfig,
    pub tracking: TrackingConfig,
    pub hitmap: HitmapConfig,
    pub snr_sweep: SweepConfig,
    pub bound: BoundConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::Demo,
            seed: 42,
            output_dir: PathBuf::from("output"),
            workers: None,
            overwrite: false,
            geometry: GeometryConfig::default(),
            model: ModelConfig::default(),
            demo: DemoConfig::default(),
            tracking: TrackingConfig::default(),
            hitmap: HitmapConfig::default(),
            snr_sweep: SweepConfig::default(),
            bound: BoundConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub samples: Option<usize>,
    pub noise_percent: Option<f64>,
    pub overwrite: bool,
    pub node_at: Option<[f64; 2]>,
}

fn check(cond: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(path, message()))
    }
}

fn check_noise(value: f64, path: &str) -> Result<()> {
    check(value.is_finite() && (0.0..100.0).contains(&value), path, || {
        format!("noise percent must lie in [0, 100), got {value}")
    })
}

fn check_point(p: [f64; 2], path: &str) -> Result<()> {
    check(
        p.iter().all(|v| v.is_finite()) && (p[0] * p[0] + p[1] * p[1]).sqrt() < 1.0,
        path,
        || format!("point ({}, {}) must lie inside the unit disk", p[0], p[1]),
    )
}

impl RunConfig {
    /// Parses a JSON document; an empty or whitespace-only document yields defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| {
                Error::config(
                    format!("line {} column {}", e.line(), e.column()),
                    e.to_string(),
                )
            })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(e) = o.experiment {
            self.experiment = e;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if let Some(n) = o.samples {
            self.hitmap.samples = n;
            self.snr_sweep.samples = n;
        }
        if let Some(p) = o.noise_percent {
            self.model.noise_percent = p;
            self.hitmap.noise_levels = vec![p];
        }
        if o.overwrite {
            self.overwrite = true;
        }
        if let Some(p) = o.node_at {
            self.bound.node_at = p;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        check(g.forward_nodes >= 2, "geometry.forward_nodes", || "must be at least 2".into())?;
        check(g.inverse_nodes >= 2, "geometry.inverse_nodes", || "must be at least 2".into())?;
        check(g.sensor_count >= 2, "geometry.sensor_count", || "must be at least 2".into())?;
        SensorArc::new(g.sensor_arc.start, g.sensor_arc.end)
            .map_err(|e| Error::config("geometry.sensor_arc", e.to_string()))?;
        if let OrientationMode::FixedAngle(a) = g.orientation {
            check(a.is_finite(), "geometry.orientation", || "angle must be finite".into())?;
        }

        let m = &self.model;
        check_noise(m.noise_percent, "model.noise_percent")?;
        check_noise(m.min_model_noise_percent, "model.min_model_noise_percent")?;
        match &m.prior {
            PriorSpec::Scalar { delta } => check(*delta > 0.0 && delta.is_finite(), "model.prior.delta", || {
                format!("must be positive and finite, got {delta}")
            })?,
            PriorSpec::Diagonal { values } => {
                for (i, v) in values.iter().enumerate() {
                    check(*v > 0.0 && v.is_finite(), &format!("model.prior.values[{i}]"), || {
                        format!("must be positive and finite, got {v}")
                    })?;
                }
            }
            PriorSpec::MatrixFile { path } => check(!path.as_os_str().is_empty(), "model.prior.path", || {
                "must not be empty".into()
            })?,
        }

        check_point(self.demo.source, "demo.source")?;

        let t = &self.tracking;
        check_point(t.far_source, "tracking.far_source")?;
        check_point(t.near_source, "tracking.near_source")?;
        check(t.steps >= 1, "tracking.steps", || "must be at least 1".into())?;
        check(t.dt > 0.0 && t.dt.is_finite(), "tracking.dt", || format!("must be positive, got {}", t.dt))?;
        check(
            (1..=t.steps).contains(&t.first_localized_step),
            "tracking.first_localized_step",
            || format!("must lie in 1..={}", t.steps),
        )?;
        check(
            t.process_noise_ratio >= 0.0 && t.process_noise_ratio.is_finite(),
            "tracking.process_noise_ratio",
            || "must be finite and nonnegative".into(),
        )?;
        check(
            t.transition.iter().flatten().all(|v| v.is_finite()),
            "tracking.transition",
            || "entries must be finite".into(),
        )?;

        let h = &self.hitmap;
        check(!h.noise_levels.is_empty(), "hitmap.noise_levels", || "must not be empty".into())?;
        for (i, p) in h.noise_levels.iter().enumerate() {
            check_noise(*p, &format!("hitmap.noise_levels[{i}]"))?;
        }
        check(h.samples >= 1, "hitmap.samples", || "must be at least 1".into())?;

        let s = &self.snr_sweep;
        check(!s.points.is_empty(), "snr_sweep.points", || "must not be empty".into())?;
        for (i, p) in s.points.iter().enumerate() {
            check_point(*p, &format!("snr_sweep.points[{i}]"))?;
        }
        check(!s.noise_grid.is_empty(), "snr_sweep.noise_grid", || "must not be empty".into())?;
        for (i, p) in s.noise_grid.iter().enumerate() {
            check(p.is_finite() && *p > 0.0 && *p < 100.0, &format!("snr_sweep.noise_grid[{i}]"), || {
                format!("must lie in (0, 100), got {p}")
            })?;
        }
        check(
            s.noise_grid.windows(2).all(|w| w[0] < w[1]),
            "snr_sweep.noise_grid",
            || "must be strictly increasing".into(),
        )?;
        check(s.samples >= 1, "snr_sweep.samples", || "must be at least 1".into())?;
        check(
            s.divergence_threshold.is_finite() && s.divergence_threshold >= 0.0,
            "snr_sweep.divergence_threshold",
            || "must be finite and nonnegative".into(),
        )?;
        check(
            s.bound_target > 0.0 && s.bound_target < 1.0,
            "snr_sweep.bound_target",
            || "must lie in (0, 1)".into(),
        )?;

        check_point(self.bound.node_at, "bound.node_at")?;
        if let Some(w) = self.workers {
            check(w >= 1, "workers", || "must be at least 1".into())?;
        }
        Ok(())
    }
}

/// Reads and validates a configuration file. Relative prior-matrix paths are
/// resolved against the directory containing the file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let mut config = RunConfig::from_json_str(&text)?;
    if let PriorSpec::MatrixFile { path: prior_path } = &mut config.model.prior {
        if prior_path.is_relative() {
            if let Some(dir) = path.parent() {
                *prior_path = dir.join(&*prior_path);
            }
        }
    }
    Ok(config)
}
