//! Noisy boundary measurements and the relative-noise convention.
//!
//! A noise level of `p` percent means i.i.d. Gaussian noise with
//! `σ = (p / 100) · RMS(Lx)` on every channel.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward::SystemMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub values: DVector<f64>,
    pub noise_percent: f64,
    /// Standard deviation of the added noise.
    pub sigma: f64,
    pub seed: u64,
    /// `(node index, amplitude)` of the sources that generated the data, when known.
    pub true_sources: Vec<(usize, f64)>,
}

pub fn rms(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.norm_squared() / v.len() as f64).sqrt()
}

/// Noise standard deviation for `noise_percent` relative to `signal`.
pub fn noise_sigma(signal: &DVector<f64>, noise_percent: f64) -> Result<f64> {
    if !(noise_percent >= 0.0) || !noise_percent.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise percent must be a finite nonnegative number, got {noise_percent}"
        )));
    }
    if noise_percent == 0.0 {
        return Ok(0.0);
    }
    let level = rms(signal);
    if level == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(noise_percent / 100.0 * level)
}

/// Deterministic RNG for an independent stream identified by `labels`.
///
/// Streams are derived from `(seed, labels)` only, so Monte-Carlo work can
/// be split across threads without changing results.
pub fn stream_rng(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &label in labels {
        state = splitmix64(state ^ splitmix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    ChaCha8Rng::seed_from_u64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds `N(0, σ²)` samples to `signal` in place.
pub fn add_noise(signal: &mut DVector<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    for v in signal.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// `y = Lx + q`, `q ~ N(0, σ²I)` with `σ` from the relative-noise convention.
pub fn simulate_measurements(
    l: &SystemMatrix,
    x: &DVector<f64>,
    noise_percent: f64,
    seed: u64,
) -> Result<Measurements> {
    if x.len() != l.node_count() {
        return Err(Error::DimensionMismatch {
            context: "source vector",
            expected: l.node_count(),
            actual: x.len(),
        });
    }
    let mut values = l.entries() * x;
    let sigma = noise_sigma(&values, noise_percent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut values, sigma, &mut rng);
    let true_sources = x
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(i, &a)| (i, a))
        .collect();
    Ok(Measurements {
        values,
        noise_percent,
        sigma,
        seed,
        true_sources,
    })
}

/// `‖L_k‖² / σ²` for a unit source at node `k`.
pub fn snr_of(l: &SystemMatrix, k: usize, noise_percent: f64) -> Result<f64> {
    if k >= l.node_count() {
        return Err(Error::InvalidArgument(format!(
            "node {k} out of range (n = {})",
            l.node_count()
        )));
    }
    if noise_percent == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    let col = l.column(k);
    let sigma = noise_sigma(&col, noise_percent)?;
    Ok(col.norm_squared() / (sigma * sigma))
}

pub fn to_decibels(snr: f64) -> f64 {
    10.0 * snr.log10()
}
