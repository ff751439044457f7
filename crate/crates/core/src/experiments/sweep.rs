//! Hit rate and bound as functions of the noise level at fixed source
//! positions, and the largest noise level compatible with a target bound.

use rayon::prelude::*;
use serde::Serialize;

use super::{labels, node_trial, NodeTrial, ReducedColumns, Setup};
use crate::bounds::snr_bound;
use crate::error::{Error, Result};
use crate::forward::SystemMatrix;
use crate::geometry::Point;
use crate::linalg::Covariance;
use crate::measurement::{noise_sigma, to_decibels};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCurve {
    pub point: [f64; 2],
    pub node: usize,
    pub node_position: [f64; 2],
    pub trials: Vec<NodeTrial>,
    /// Smallest noise level where `rate − bound` exceeds the threshold.
    pub divergence_percent: Option<f64>,
}

impl SweepCurve {
    pub fn bound_is_nonincreasing(&self) -> bool {
        self.trials.windows(2).all(|w| w[1].bound <= w[0].bound + 1e-15)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub seed: u64,
    pub samples: usize,
    pub divergence_threshold: f64,
    pub curves: Vec<SweepCurve>,
}

impl SweepResult {
    pub fn divergence_points(&self) -> Vec<Option<f64>> {
        self.curves.iter().map(|c| c.divergence_percent).collect()
    }

    /// Divergence points strictly decreasing along the given point order.
    pub fn divergence_strictly_decreasing(&self) -> bool {
        let d = self.divergence_points();
        d.iter().all(Option::is_some) && d.windows(2).all(|w| w[1].unwrap() < w[0].unwrap())
    }
}

/// Runs the Monte-Carlo trial at the inverse node nearest to each point for
/// every noise level on `noise_grid`.
#[allow(clippy::too_many_arguments)]
pub fn run_snr_sweep(
    setup: &Setup,
    prior: &Covariance,
    points: &[Point],
    noise_grid: &[f64],
    min_model_noise_percent: f64,
    samples: usize,
    seed: u64,
    divergence_threshold: f64,
) -> Result<SweepResult> {
    if noise_grid.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
        return Err(Error::InvalidArgument("noise grid must lie in (0, 100)".into()));
    }
    let inverse = &setup.inverse;
    let reduced = ReducedColumns::new(inverse, prior)?;
    let g = inverse.geometry();
    let curves = points
        .iter()
        .map(|p| {
            let k = g.nearest_node(p);
            let trials = noise_grid
                .par_iter()
                .map(|&pct| {
                    node_trial(
                        setup,
                        prior,
                        &reduced,
                        k,
                        pct,
                        min_model_noise_percent,
                        samples,
                        seed,
                        labels::SWEEP,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let divergence_percent = trials
                .iter()
                .find(|t| t.rate - t.bound > divergence_threshold)
                .map(|t| t.noise_percent);
            Ok(SweepCurve {
                point: [p.x, p.y],
                node: k,
                node_position: [g.nodes()[k].x, g.nodes()[k].y],
                trials,
                divergence_percent,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        seed,
        samples,
        divergence_threshold,
        curves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseLimit {
    pub target: f64,
    /// Largest noise percent at which some node still has SNR bound ≥ target.
    pub noise_percent: f64,
    pub node: usize,
    pub snr_db: f64,
}

fn max_snr_bound(inverse: &SystemMatrix, reduced: &ReducedColumns, pct: f64) -> Result<(f64, usize, f64)> {
    (0..inverse.node_count())
        .into_par_iter()
        .map(|k| {
            let sigma = noise_sigma(&inverse.column(k), pct)?;
            let snr = reduced.columns.column(k).norm_squared() / (sigma * sigma);
            let b = snr_bound(k, &reduced.columns, &reduced.noise(sigma), snr)?;
            Ok((b.probability, k, snr))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| {
            v.into_iter()
                .fold((f64::NEG_INFINITY, 0, 0.0), |a, b| if b.0 > a.0 { b } else { a })
        })
}

/// Bisection for the noise level where the best node's SNR bound equals
/// `target`, for i.i.d. sources over all inverse nodes.
pub fn noise_limit_for_bound(inverse: &SystemMatrix, prior: &Covariance, target: f64) -> Result<NoiseLimit> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target must lie in (0, 1), got {target}")));
    }
    let reduced = ReducedColumns::new(inverse, prior)?;
    let (mut lo, mut hi) = (1e-4, 99.0);
    if max_snr_bound(inverse, &reduced, lo)?.0 < target {
        return Err(Error::InvalidArgument(format!(
            "no node reaches bound {target} even at {lo} % noise"
        )));
    }
    if max_snr_bound(inverse, &reduced, hi)?.0 >= target {
        lo = hi;
    } else {
        while hi - lo > 1e-6 * hi {
            let mid = 0.5 * (lo + hi);
            if max_snr_bound(inverse, &reduced, mid)?.0 >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (_, node, snr) = max_snr_bound(inverse, &reduced, lo)?;
    Ok(NoiseLimit {
        target,
        noise_percent: lo,
        node,
        snr_db: to_decibels(snr),
    })
}
