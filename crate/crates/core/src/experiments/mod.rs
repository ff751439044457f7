//! Numerical studies: far-field demo, two-source tracking, Monte-Carlo
//! hit-rate maps and SNR sweeps.
//!
//! Data are simulated on a forward grid and reconstructed on a coarser,
//! disjoint inverse grid. Random draws come from per-task streams derived
//! from the run seed, so results do not depend on thread scheduling.

pub mod demo;
pub mod hitmap;
pub mod sweep;
pub mod tracking;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bounds::reduce_referenced;
use crate::config::GeometryConfig;
use crate::error::{Error, Result};
use crate::forward::{assemble_system_matrix, reference_basis, SystemMatrix};
use crate::geometry::{build_disk_geometry, OrientationMode};
use crate::linalg::Covariance;

pub use demo::{run_far_field_demo, DemoResult, DemoRun};
pub use hitmap::{node_trial, run_spatial_hit_rate, HitRateMap, NodeTrial};
pub use sweep::{noise_limit_for_bound, run_snr_sweep, NoiseLimit, SweepCurve, SweepResult};
pub use tracking::{
    forcing, pearson, run_tracking, simulate_true_tracks, MethodResult, TrackingMethod, TrackingResult,
    TrackingScenario,
};

/// Two-sided 99 % standard normal quantile.
pub const WILSON_Z_99: f64 = 2.575_829_303_548_900_4;

/// Half-width of the Wilson score interval for a binomial proportion.
pub fn wilson_half_width(rate: f64, samples: usize, z: f64) -> f64 {
    let n = samples as f64;
    let z2 = z * z;
    z / (1.0 + z2 / n) * (rate * (1.0 - rate) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Forward and inverse system matrices for one geometry configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub forward: SystemMatrix,
    pub inverse: SystemMatrix,
    /// Orientation rule, also applied to sources placed off the grids.
    pub orientation: OrientationMode,
    /// Orthonormal basis (m × (m−1)) of zero-mean sensor vectors.
    pub basis: DMatrix<f64>,
    /// Inverse system matrix in the zero-mean coordinates, `Uᵀ L`.
    pub inverse_reduced: DMatrix<f64>,
}

impl Setup {
    pub fn build(config: &GeometryConfig) -> Result<Self> {
        let make = |target| {
            build_disk_geometry(target, config.sensor_count, config.sensor_arc, config.orientation)
                .and_then(|g| assemble_system_matrix(Arc::new(g)))
        };
        let forward = make(config.forward_nodes)?;
        let inverse = make(config.inverse_nodes)?;
        if !forward.geometry().shares_no_nodes_with(inverse.geometry()) {
            return Err(Error::InvalidArgument(
                "forward and inverse grids share node coordinates".into(),
            ));
        }
        let basis = reference_basis(inverse.sensor_count());
        let inverse_reduced = basis.transpose() * inverse.entries();
        Ok(Setup {
            forward,
            inverse,
            orientation: config.orientation,
            basis,
            inverse_reduced,
        })
    }

    /// Coordinates of a sensor vector in the zero-mean subspace.
    ///
    /// The columns of `L` are referenced, so `Lᵀ Σ⁻¹ y` only sees this part
    /// of `y` whenever the noise covariance is isotropic. Working in these
    /// coordinates removes the eigenvalue `σ²` that the all-ones direction
    /// contributes to `Σ` and that dominates its condition number.
    pub fn reduce(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(y)
    }

    pub fn reduced_sensor_count(&self) -> usize {
        self.basis.ncols()
    }
}

/// Inverse-grid columns scaled by the prior root and expressed in the
/// zero-mean sensor subspace, where the localization bound is evaluated.
#[derive(Clone, Debug)]
pub struct ReducedColumns {
    pub columns: DMatrix<f64>,
}

impl ReducedColumns {
    pub fn new(inverse: &SystemMatrix, prior: &Covariance) -> Result<Self> {
        let scaled = prior.sqrt()?.right_multiply(inverse.entries());
        let (columns, _) = reduce_referenced(&scaled, &Covariance::identity(inverse.sensor_count()))?;
        Ok(ReducedColumns { columns })
    }

    /// `σ²I` in the reduced dimension.
    pub fn noise(&self, sigma: f64) -> Covariance {
        Covariance::scaled(self.columns.nrows(), sigma * sigma)
    }
}

/// Stream labels keep the random draws of different experiments independent.
pub(crate) mod labels {
    pub const DEMO: u64 = 0x64656d6f;
    pub const TRACK: u64 = 0x74726163;
    pub const GMM: u64 = 0x676d6d00;
    pub const HITMAP: u64 = 0x6869746d;
    pub const SWEEP: u64 = 0x73776570;
}
