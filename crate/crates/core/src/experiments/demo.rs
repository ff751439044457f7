//! Single far-field source reconstructed with BMNE and with standardization.

use nalgebra::DVector;
use serde::Serialize;

use super::{labels, Setup};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::forward::forward_column;
use crate::geometry::Point;
use crate::inverse::{GaussianModel, InverseOperator, Reconstruction};
use crate::linalg::Covariance;
use crate::measurement::{add_noise, noise_sigma, stream_rng};

/// Fraction of the maximum magnitude defining the high-value region.
pub const HIGH_VALUE_FRACTION: f64 = 0.9;

#[derive(Clone, Debug)]
pub struct DemoRun {
    pub noise_percent: f64,
    /// Standard deviation of the simulated noise.
    pub sigma: f64,
    /// Standard deviation assumed by the inverse model.
    pub model_sigma: f64,
    pub bmne: Reconstruction,
    pub sloreta: Reconstruction,
}

impl DemoRun {
    pub fn bmne_high_region(&self) -> usize {
        high_region(&self.bmne)
    }

    pub fn sloreta_high_region(&self) -> usize {
        high_region(&self.sloreta)
    }
}

fn high_region(r: &Reconstruction) -> usize {
    let max = r.values().amax();
    r.values().iter().filter(|v| v.abs() >= HIGH_VALUE_FRACTION * max).count()
}

#[derive(Clone, Debug)]
pub struct DemoResult {
    pub source: Point,
    /// Inverse-grid node closest to the source.
    pub nearest_node: usize,
    pub noiseless: DemoRun,
    pub noisy: DemoRun,
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoRunSummary {
    pub noise_percent: f64,
    pub sigma: f64,
    pub model_sigma: f64,
    pub bmne_argmax: usize,
    pub bmne_argmax_position: [f64; 2],
    pub bmne_argmax_sensor_distance: f64,
    pub bmne_high_region_nodes: usize,
    pub sloreta_argmax: usize,
    pub sloreta_argmax_position: [f64; 2],
    pub sloreta_argmax_sensor_distance: f64,
    pub sloreta_high_region_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoSummary {
    pub source: [f64; 2],
    pub source_sensor_distance: f64,
    pub nearest_node: usize,
    pub nearest_node_position: [f64; 2],
    pub noiseless: DemoRunSummary,
    pub noisy: DemoRunSummary,
}

impl DemoResult {
    pub fn summary(&self, setup: &Setup) -> DemoSummary {
        let g = setup.inverse.geometry();
        let pos = |k: usize| [g.nodes()[k].x, g.nodes()[k].y];
        let run = |r: &DemoRun| DemoRunSummary {
            noise_percent: r.noise_percent,
            sigma: r.sigma,
            model_sigma: r.model_sigma,
            bmne_argmax: r.bmne.argmax(),
            bmne_argmax_position: pos(r.bmne.argmax()),
            bmne_argmax_sensor_distance: g.distance_to_sensors(&g.nodes()[r.bmne.argmax()]),
            bmne_high_region_nodes: r.bmne_high_region(),
            sloreta_argmax: r.sloreta.argmax(),
            sloreta_argmax_position: pos(r.sloreta.argmax()),
            sloreta_argmax_sensor_distance: g.distance_to_sensors(&g.nodes()[r.sloreta.argmax()]),
            sloreta_high_region_nodes: r.sloreta_high_region(),
        };
        DemoSummary {
            source: [self.source.x, self.source.y],
            source_sensor_distance: g.distance_to_sensors(&self.source),
            nearest_node: self.nearest_node,
            nearest_node_position: pos(self.nearest_node),
            noiseless: run(&self.noiseless),
            noisy: run(&self.noisy),
        }
    }
}

fn reconstruct(
    setup: &Setup,
    model: &ModelConfig,
    prior: &Covariance,
    clean: &DVector<f64>,
    noise_percent: f64,
    seed: u64,
) -> Result<DemoRun> {
    let sigma = noise_sigma(clean, noise_percent)?;
    let mut y = clean.clone();
    add_noise(&mut y, sigma, &mut stream_rng(seed, &[labels::DEMO, noise_percent.to_bits()]));
    let y = setup.reduce(&y);
    let model_sigma = noise_sigma(clean, model.model_noise_percent(noise_percent))?;
    let gaussian = GaussianModel::new(
        prior.clone(),
        Covariance::scaled(setup.reduced_sensor_count(), model_sigma * model_sigma),
    )?;
    let op = InverseOperator::new(&setup.inverse_reduced, &gaussian)?;
    Ok(DemoRun {
        noise_percent,
        sigma,
        model_sigma,
        bmne: op.bmne(&y)?,
        sloreta: op.standardized(&y)?,
    })
}

/// Reconstructs a dipole at `source` (exact position, not a grid node) both
/// without noise and at `model.noise_percent`.
pub fn run_far_field_demo(
    setup: &Setup,
    model: &ModelConfig,
    prior: &Covariance,
    source: Point,
    seed: u64,
) -> Result<DemoResult> {
    let geometry = setup.inverse.geometry();
    let orientation = setup.orientation.orientation_at(&source)?;
    let clean = forward_column(geometry.sensors(), &source, &orientation)?;
    Ok(DemoResult {
        source,
        nearest_node: geometry.nearest_node(&source),
        noiseless: reconstruct(setup, model, prior, &clean, 0.0, seed)?,
        noisy: reconstruct(setup, model, prior, &clean, model.noise_percent, seed)?,
    })
}
