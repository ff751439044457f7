//! Two-component Gaussian mixtures in the plane, fitted by EM.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measurement::stream_rng;

pub const MAX_ITERATIONS: usize = 500;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
pub const RESTARTS: usize = 8;
pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const ELLIPSE_LEVEL: f64 = 0.75;

const MIN_DISTINCT: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GmmComponent {
    pub mean: [f64; 2],
    /// Row-major 2×2 covariance.
    pub covariance: [[f64; 2]; 2],
    pub weight: f64,
}

impl GmmComponent {
    pub fn mean_point(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    fn cov_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.covariance[0][0],
            self.covariance[0][1],
            self.covariance[1][0],
            self.covariance[1][1],
        )
    }

    /// Semi-axes and orientation (radians, major axis) of the confidence
    /// ellipse containing mass `level` of this component.
    pub fn ellipse(&self, level: f64) -> ([f64; 2], f64) {
        let radius = (-2.0 * (1.0 - level).ln()).sqrt();
        let eig = SymmetricEigen::new(self.cov_matrix());
        let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let v = eig.eigenvectors.column(major);
        let angle = v[1].atan2(v[0]);
        (
            [
                radius * eig.eigenvalues[major].max(0.0).sqrt(),
                radius * eig.eigenvalues[minor].max(0.0).sqrt(),
            ],
            angle,
        )
    }

    /// Whether `p` lies inside the ellipse of mass `level`.
    pub fn contains(&self, p: &Point, level: f64) -> bool {
        let d = p - self.mean_point();
        match self.cov_matrix().try_inverse() {
            Some(inv) => (d.transpose() * inv * d)[(0, 0)] <= -2.0 * (1.0 - level).ln(),
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GmmSummary {
    /// Ordered by decreasing mean y, then decreasing mean x.
    pub components: [GmmComponent; 2],
    pub ellipse_level: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl GmmSummary {
    /// Component whose mean is nearest to `p`.
    pub fn nearest_component(&self, p: &Point) -> &GmmComponent {
        let d0 = (self.components[0].mean_point() - p).norm();
        let d1 = (self.components[1].mean_point() - p).norm();
        if d0 <= d1 {
            &self.components[0]
        } else {
            &self.components[1]
        }
    }
}

#[derive(Clone)]
struct Params {
    weights: [f64; 2],
    means: [Vector2<f64>; 2],
    covs: [Matrix2<f64>; 2],
}

fn log_density(x: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> Option<f64> {
    let det = cov.determinant();
    if !(det > 0.0) {
        return None;
    }
    let inv = cov.try_inverse()?;
    let d = x - mean;
    let q = (d.transpose() * inv * d)[(0, 0)];
    Some(-0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln())
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// E-step returning the total log-likelihood and responsibilities of component 0.
fn expectation(points: &[Vector2<f64>], p: &Params, resp: &mut [f64]) -> Option<f64> {
    let mut total = 0.0;
    for (i, x) in points.iter().enumerate() {
        let l0 = p.weights[0].ln() + log_density(x, &p.means[0], &p.covs[0])?;
        let l1 = p.weights[1].ln() + log_density(x, &p.means[1], &p.covs[1])?;
        let lse = log_sum_exp(l0, l1);
        resp[i] = (l0 - lse).exp();
        total += lse;
    }
    total.is_finite().then_some(total)
}

fn maximization(points: &[Vector2<f64>], resp: &[f64]) -> Option<Params> {
    let floor = Matrix2::identity() * COVARIANCE_FLOOR;
    let n = points.len() as f64;
    let mut out = Params {
        weights: [0.0; 2],
        means: [Vector2::zeros(); 2],
        covs: [Matrix2::zeros(); 2],
    };
    for c in 0..2 {
        let r = |i: usize| if c == 0 { resp[i] } else { 1.0 - resp[i] };
        let nk: f64 = (0..points.len()).map(r).sum();
        if nk < 1e-10 {
            return None;
        }
        let mean = points
            .iter()
            .enumerate()
            .fold(Vector2::zeros(), |acc, (i, x)| acc + x * r(i))
            / nk;
        let cov = points.iter().enumerate().fold(Matrix2::zeros(), |acc, (i, x)| {
            let d = x - mean;
            acc + d * d.transpose() * r(i)
        }) / nk;
        out.weights[c] = nk / n;
        out.means[c] = mean;
        out.covs[c] = cov + floor;
    }
    Some(out)
}

fn initial_params(points: &[Vector2<f64>], rng: &mut impl Rng) -> Params {
    // k-means++ style seeding: second mean drawn proportionally to squared distance.
    let first = points[rng.gen_range(0..points.len())];
    let d2: Vec<f64> = points.iter().map(|p| (p - first).norm_squared()).collect();
    let total: f64 = d2.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    let mut second = first;
    for (p, w) in points.iter().zip(&d2) {
        if *w > 0.0 {
            second = *p;
            if target < *w {
                break;
            }
            target -= w;
        }
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let cov = points
        .iter()
        .fold(Matrix2::zeros(), |a, p| a + (p - mean) * (p - mean).transpose())
        / n
        + Matrix2::identity() * COVARIANCE_FLOOR;
    Params {
        weights: [0.5, 0.5],
        means: [first, second],
        covs: [cov, cov],
    }
}

fn run_em(points: &[Vector2<f64>], mut params: Params) -> Option<(Params, f64, usize)> {
    let mut resp = vec![0.0; points.len()];
    let mut ll = expectation(points, &params, &mut resp)?;
    for iter in 1..=MAX_ITERATIONS {
        params = maximization(points, &resp)?;
        let next = expectation(points, &params, &mut resp)?;
        let converged = (next - ll).abs() <= RELATIVE_TOLERANCE * ll.abs().max(1.0);
        ll = next;
        if converged {
            return Some((params, ll, iter));
        }
    }
    Some((params, ll, MAX_ITERATIONS))
}

fn count_distinct(points: &[Point]) -> usize {
    let mut keys: Vec<(u64, u64)> = points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Best-of-restarts EM fit of a two-component mixture.
pub fn gmm_fit_2(points: &[Point], seed: u64) -> Result<GmmSummary> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DegenerateCluster("non-finite point".into()));
    }
    let distinct = count_distinct(points);
    if distinct < MIN_DISTINCT {
        return Err(Error::DegenerateCluster(format!(
            "need at least {MIN_DISTINCT} distinct points, got {distinct}"
        )));
    }
    let pts: Vec<Vector2<f64>> = points.to_vec();
    let mut best: Option<(Params, f64, usize)> = None;
    for restart in 0..RESTARTS {
        let mut rng = stream_rng(seed, &[0x6d6d, restart as u64]);
        let Some(fit) = run_em(&pts, initial_params(&pts, &mut rng)) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.1 > b.1) {
            best = Some(fit);
        }
    }
    let (params, log_likelihood, iterations) =
        best.ok_or_else(|| Error::DegenerateCluster("EM failed for every restart".into()))?;
    let mut comps: Vec<GmmComponent> = (0..2)
        .map(|c| GmmComponent {
            mean: [params.means[c].x, params.means[c].y],
            covariance: [
                [params.covs[c][(0, 0)], params.covs[c][(0, 1)]],
                [params.covs[c][(1, 0)], params.covs[c][(1, 1)]],
            ],
            weight: params.weights[c],
        })
        .collect();
    comps.sort_by(|a, b| {
        b.mean[1]
            .total_cmp(&a.mean[1])
            .then(b.mean[0].total_cmp(&a.mean[0]))
    });
    let second = comps.pop().expect("two components");
    let first = comps.pop().expect("two components");
    Ok(GmmSummary {
        components: [first, second],
        ellipse_level: ELLIPSE_LEVEL,
        log_likelihood,
        iterations,
    })
}
