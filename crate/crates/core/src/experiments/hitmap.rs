//! Monte-Carlo perfect-localization rates per node, paired with the
//! analytic lower bound.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{labels, wilson_half_width, ReducedColumns, Setup, WILSON_Z_99};
use crate::bounds::{localization_bound, snr_bound};
use crate::error::{Error, Result};
use crate::inverse::{GaussianModel, InverseOperator};
use crate::linalg::Covariance;
use crate::measurement::{noise_sigma, stream_rng};

/// Outcome of repeated noisy reconstructions of a unit source at one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeTrial {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub noise_percent: f64,
    pub sigma: f64,
    pub samples: usize,
    /// Samples whose argmax |z| is exactly the true node.
    pub hits: usize,
    /// Samples whose argmax |z| lies within one mesh spacing of the true node.
    pub hits_within_mesh: usize,
    pub rate: f64,
    pub wilson_half_width: f64,
    /// Eigenvalue form of the lower bound (1 for noiseless data).
    pub bound: f64,
    /// SNR form of the lower bound (1 for noiseless data).
    pub snr_bound: f64,
    pub theta: f64,
    /// `‖L_k‖²/σ²`; infinite for noiseless data.
    pub snr: f64,
}

impl NodeTrial {
    /// `rate + half-width ≥ bound`.
    pub fn dominates_bound(&self) -> bool {
        self.rate + self.wilson_half_width >= self.bound
    }
}

/// Runs `samples` reconstructions of `y = L_k + q`, `q ~ N(0, σ²I)`.
///
/// The inverse model assumes the noise level
/// `max(noise_percent, min_model_noise_percent)`; the bound uses the true one.
#[allow(clippy::too_many_arguments)]
pub fn node_trial(
    setup: &Setup,
    prior: &Covariance,
    reduced: &ReducedColumns,
    k: usize,
    noise_percent: f64,
    min_model_noise_percent: f64,
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<NodeTrial> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples per node must be at least 1".into()));
    }
    let inverse = &setup.inverse;
    let g = inverse.geometry();
    let column = inverse.column(k);
    let sigma = noise_sigma(&column, noise_percent)?;
    let model_sigma = noise_sigma(&column, noise_percent.max(min_model_noise_percent))?;
    let model = GaussianModel::new(
        prior.clone(),
        Covariance::scaled(setup.reduced_sensor_count(), model_sigma * model_sigma),
    )?;
    let op = InverseOperator::new(&setup.inverse_reduced, &model)?;
    let kernel = op.standardized_kernel() * setup.basis.transpose();
    let clean = &kernel * &column;
    let node = g.nodes()[k];
    let radius = g.mesh_spacing() * (1.0 + 1e-9);
    let classify = |z: &DVector<f64>| {
        let winner = z.iamax();
        (winner == k, (g.nodes()[winner] - node).norm() <= radius)
    };

    let (hits, hits_within_mesh) = if sigma == 0.0 {
        let (hit, near) = classify(&clean);
        (if hit { samples } else { 0 }, if near { samples } else { 0 })
    } else {
        let m = inverse.sensor_count();
        let mut rng = stream_rng(seed, &[stream, noise_percent.to_bits(), k as u64]);
        let noise = DMatrix::from_fn(m, samples, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        });
        let mut z = &kernel * noise;
        let (mut hits, mut near) = (0, 0);
        for mut col in z.column_iter_mut() {
            col += &clean;
            let (h, n) = classify(&col.into_owned());
            hits += h as usize;
            near += n as usize;
        }
        (hits, near)
    };

    let rate = hits as f64 / samples as f64;
    let (bound, snr_b, theta, snr) = if sigma == 0.0 {
        (1.0, 1.0, f64::NAN, f64::INFINITY)
    } else {
        let c = reduced.noise(sigma);
        let eig = localization_bound(k, &reduced.columns, &c, None)?;
        let snr = reduced.columns.column(k).norm_squared() / (sigma * sigma);
        let s = snr_bound(k, &reduced.columns, &c, snr)?;
        (eig.probability, s.probability, eig.theta, snr)
    };
    Ok(NodeTrial {
        node: k,
        x: node.x,
        y: node.y,
        noise_percent,
        sigma,
        samples,
        hits,
        hits_within_mesh,
        rate,
        wilson_half_width: wilson_half_width(rate, samples, WILSON_Z_99),
        bound,
        snr_bound: snr_b,
        theta,
        snr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitRateMap {
    pub noise_percent: f64,
    pub seed: u64,
    pub samples: usize,
    pub mesh_spacing: f64,
    pub nodes: Vec<NodeTrial>,
}

impl HitRateMap {
    /// Nodes with rate strictly above `threshold`.
    pub fn nodes_above(&self, threshold: f64) -> usize {
        self.nodes.iter().filter(|t| t.rate > threshold).count()
    }

    pub fn fraction_above(&self, threshold: f64) -> f64 {
        self.nodes_above(threshold) as f64 / self.nodes.len() as f64
    }

    /// Nodes where `rate + half-width < bound`.
    pub fn bound_violations(&self) -> Vec<usize> {
        self.nodes.iter().filter(|t| !t.dominates_bound()).map(|t| t.node).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.nodes.iter().map(|t| t.rate).collect()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.nodes.iter().map(|t| t.bound).collect()
    }
}

/// Hit-rate and bound maps over every inverse-grid node.
///
/// Nodes run in parallel on the current rayon pool; each node draws from
/// its own stream so the map does not depend on the worker count.
pub fn run_spatial_hit_rate(
    setup: &Setup,
    prior: &Covariance,
    noise_percent: f64,
    min_model_noise_percent: f64,
    samples: usize,
    seed: u64,
) -> Result<HitRateMap> {
    let inverse = &setup.inverse;
    let reduced = ReducedColumns::new(inverse, prior)?;
    let nodes = (0..inverse.node_count())
        .into_par_iter()
        .map(|k| {
            node_trial(
                setup,
                prior,
                &reduced,
                k,
                noise_percent,
                min_model_noise_percent,
                samples,
                seed,
                labels::HITMAP,
            )
            .map_err(|e| e.context(format!("hit-rate node {k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HitRateMap {
        noise_percent,
        seed,
        samples,
        mesh_spacing: inverse.geometry().mesh_spacing(),
        nodes,
    })
}
