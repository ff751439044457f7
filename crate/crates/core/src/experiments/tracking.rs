//! Two oscillating sources tracked with the Kalman filter, the standardized
//! Kalman filter and frame-by-frame standardized estimates.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{labels, Setup};
use crate::config::TrackingConfig;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::gmm::{gmm_fit_2, GmmSummary};
use crate::inverse::{GaussianModel, InverseOperator};
use crate::kalman::{run_filter, EvolutionModel};
use crate::linalg::Covariance;
use crate::measurement::{rms, stream_rng};

/// Source forcing `exp(−10⁵(t − 0.012)²) · cos(500(t − 0.012) + π/2)`.
pub fn forcing(t: f64) -> f64 {
    let s = t - 0.012;
    (-1e5 * s * s).exp() * (500.0 * s + std::f64::consts::FRAC_PI_2).cos()
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackingScenario {
    pub transition: [[f64; 2]; 2],
    pub steps: usize,
    pub dt: f64,
    /// Driven by the forcing term.
    pub far_source: [f64; 2],
    pub near_source: [f64; 2],
    pub noise_percent: f64,
    /// First 1-based step included in the localization statistics.
    pub first_localized_step: usize,
    #[serde(skip)]
    pub forcing: fn(f64) -> f64,
}

impl TrackingScenario {
    pub fn from_config(c: &TrackingConfig, noise_percent: f64) -> Result<Self> {
        let s = TrackingScenario {
            transition: c.transition,
            steps: c.steps,
            dt: c.dt,
            far_source: c.far_source,
            near_source: c.near_source,
            noise_percent,
            first_localized_step: c.first_localized_step,
            forcing,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("tracking needs steps ≥ 1 and dt > 0".into()));
        }
        for p in [self.far_source, self.near_source] {
            if !((p[0] * p[0] + p[1] * p[1]).sqrt() < 1.0) {
                return Err(Error::SourceOutsideDisk { point: p });
            }
        }
        if !(1..=self.steps).contains(&self.first_localized_step) {
            return Err(Error::InvalidArgument("first localized step out of range".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| k as f64 * self.dt).collect()
    }

    pub fn far_point(&self) -> Point {
        Point::new(self.far_source[0], self.far_source[1])
    }

    pub fn near_point(&self) -> Point {
        Point::new(self.near_source[0], self.near_source[1])
    }
}

/// Amplitudes `s_k` (rows: far, near; columns: steps 1..=T) with
/// `s_{k+1} = A s_k + (f((k+1)Δt), 0)ᵀ` from `s_0 = 0`.
pub fn simulate_true_tracks(scenario: &TrackingScenario) -> Result<DMatrix<f64>> {
    scenario.validate()?;
    let t = scenario.transition;
    let a = Matrix2::new(t[0][0], t[0][1], t[1][0], t[1][1]);
    let mut s = Vector2::zeros();
    let mut out = DMatrix::zeros(2, scenario.steps);
    for k in 0..scenario.steps {
        s = a * s + Vector2::new((scenario.forcing)((k + 1) as f64 * scenario.dt), 0.0);
        out[(0, k)] = s.x;
        out[(1, k)] = s.y;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMethod {
    Kf,
    Skf,
    Sloreta,
}

impl TrackingMethod {
    pub const ALL: [TrackingMethod; 3] = [TrackingMethod::Kf, TrackingMethod::Skf, TrackingMethod::Sloreta];

    pub fn name(&self) -> &'static str {
        match self {
            TrackingMethod::Kf => "kf",
            TrackingMethod::Skf => "skf",
            TrackingMethod::Sloreta => "sloreta",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepLocalization {
    pub step: usize,
    pub t: f64,
    pub argmax: usize,
    pub argmin: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodResult {
    pub method: TrackingMethod,
    #[serde(skip)]
    pub states: Vec<DVector<f64>>,
    pub localizations: Vec<StepLocalization>,
    /// Reconstruction at the inverse node nearest each source, unit max |value|.
    pub near_track: Vec<f64>,
    pub far_track: Vec<f64>,
    pub gmm: GmmSummary,
    /// Distance from the near source to the closest cluster mean.
    pub near_cluster_distance: f64,
    /// The other cluster's mean.
    pub far_cluster_mean: [f64; 2],
    pub far_cluster_distance: f64,
    pub far_cluster_sensor_distance: f64,
    /// Smallest distance from the far source to any cluster mean.
    pub far_source_nearest_cluster: f64,
    pub near_track_correlation: f64,
    pub far_track_correlation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackingResult {
    pub scenario: TrackingScenario,
    pub seed: u64,
    pub times: Vec<f64>,
    pub true_far: Vec<f64>,
    pub true_near: Vec<f64>,
    pub sigma: f64,
    pub far_forward_node: usize,
    pub near_forward_node: usize,
    pub far_inverse_node: usize,
    pub near_inverse_node: usize,
    pub inverse_mesh_spacing: f64,
    pub far_source_sensor_distance: f64,
    pub methods: Vec<MethodResult>,
}

impl TrackingResult {
    pub fn method(&self, m: TrackingMethod) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if max == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / max).collect()
    }
}

/// Pearson correlation; zero when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Simulates noisy data on the forward grid and reconstructs it with each
/// requested method on the inverse grid.
///
/// Sources sit at the forward nodes nearest the scenario positions. The
/// noise level is relative to the RMS over the whole noiseless series. The
/// filters use a random walk with `P₀ = Γ`, `Q = ratio · mean(diag Γ) · I`
/// and `R = σ²I`; frame-wise standardized estimates use `(Γ, σ²I)`.
pub fn run_tracking(
    setup: &Setup,
    scenario: &TrackingScenario,
    prior: &Covariance,
    process_noise_ratio: f64,
    seed: u64,
    methods: &[TrackingMethod],
) -> Result<TrackingResult> {
    let tracks = simulate_true_tracks(scenario)?;
    let fwd = setup.forward.geometry();
    let inv = setup.inverse.geometry();
    let far_f = fwd.nearest_node(&scenario.far_point());
    let near_f = fwd.nearest_node(&scenario.near_point());
    let m = setup.forward.sensor_count();
    let n = setup.inverse.node_count();
    if prior.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "prior covariance vs. inverse node count",
            expected: n,
            actual: prior.dim(),
        });
    }

    let clean = setup.forward.column(far_f) * tracks.row(0) + setup.forward.column(near_f) * tracks.row(1);
    let flat = DVector::from_column_slice(clean.as_slice());
    let sigma = scenario.noise_percent / 100.0 * rms(&flat);
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "tracking needs a positive noise level for the measurement covariance".into(),
        ));
    }
    let mut rng = stream_rng(seed, &[labels::TRACK]);
    let data: Vec<DVector<f64>> = (0..scenario.steps)
        .map(|t| {
            DVector::from_fn(m, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                clean[(i, t)] + sigma * z
            })
        })
        .collect();
    // Filtering in the zero-mean coordinates gives the same states as in
    // sensor space and keeps the innovation covariance well conditioned.
    let data: Vec<DVector<f64>> = data.iter().map(|y| setup.reduce(y)).collect();
    let noise = Covariance::scaled(setup.reduced_sensor_count(), sigma * sigma);

    let want = |x: TrackingMethod| methods.contains(&x);
    let mut reconstructions: Vec<(TrackingMethod, Vec<DVector<f64>>)> = Vec::new();
    if want(TrackingMethod::Kf) || want(TrackingMethod::Skf) {
        let p0 = prior.to_dense();
        let q = process_noise_ratio * prior.diagonal().mean();
        let evo = EvolutionModel::random_walk(n, q)?;
        let states = run_filter(
            &data,
            &setup.inverse_reduced,
            &evo,
            &noise,
            &DVector::zeros(n),
            &p0,
            want(TrackingMethod::Skf),
        )?;
        if want(TrackingMethod::Kf) {
            reconstructions.push((TrackingMethod::Kf, states.iter().map(|s| s.mean.clone()).collect()));
        }
        if want(TrackingMethod::Skf) {
            let z = states
                .into_iter()
                .map(|s| s.standardized.expect("standardized state requested"))
                .collect();
            reconstructions.push((TrackingMethod::Skf, z));
        }
    }
    if want(TrackingMethod::Sloreta) {
        let op = InverseOperator::new(&setup.inverse_reduced, &GaussianModel::new(prior.clone(), noise.clone())?)?;
        reconstructions.push((TrackingMethod::Sloreta, data.iter().map(|y| op.standardized_values(y)).collect()));
    }

    let far_i = inv.nearest_node(&scenario.far_point());
    let near_i = inv.nearest_node(&scenario.near_point());
    let true_far: Vec<f64> = tracks.row(0).iter().copied().collect();
    let true_near: Vec<f64> = tracks.row(1).iter().copied().collect();
    let times = scenario.times();
    let mut results = Vec::new();
    for (method, states) in reconstructions {
        let mut localizations = Vec::new();
        let mut points = Vec::new();
        for (step, z) in states.iter().enumerate().skip(scenario.first_localized_step - 1) {
            let (argmax, argmin) = (z.imax(), z.imin());
            points.push(inv.nodes()[argmax]);
            points.push(inv.nodes()[argmin]);
            localizations.push(StepLocalization {
                step: step + 1,
                t: times[step],
                argmax,
                argmin,
            });
        }
        let gmm = gmm_fit_2(&points, seed ^ labels::GMM).map_err(|e| e.context(format!("{} clusters", method.name())))?;
        let near = scenario.near_point();
        let far = scenario.far_point();
        let near_comp = gmm.nearest_component(&near);
        let far_comp = if std::ptr::eq(near_comp, &gmm.components[0]) {
            &gmm.components[1]
        } else {
            &gmm.components[0]
        };
        let near_track = normalized(states.iter().map(|z| z[near_i]).collect());
        let far_track = normalized(states.iter().map(|z| z[far_i]).collect());
        results.push(MethodResult {
            method,
            localizations,
            near_cluster_distance: (near_comp.mean_point() - near).norm(),
            far_cluster_mean: far_comp.mean,
            far_cluster_distance: (far_comp.mean_point() - far).norm(),
            far_cluster_sensor_distance: inv.distance_to_sensors(&far_comp.mean_point()),
            far_source_nearest_cluster: gmm
                .components
                .iter()
                .map(|c| (c.mean_point() - far).norm())
                .fold(f64::INFINITY, f64::min),
            near_track_correlation: pearson(&near_track, &true_near),
            far_track_correlation: pearson(&far_track, &true_far),
            near_track,
            far_track,
            gmm,
            states,
        });
    }

    Ok(TrackingResult {
        scenario: scenario.clone(),
        seed,
        times,
        true_far,
        true_near,
        sigma,
        far_forward_node: far_f,
        near_forward_node: near_f,
        far_inverse_node: far_i,
        near_inverse_node: near_i,
        inverse_mesh_spacing: inv.mesh_spacing(),
        far_source_sensor_distance: inv.distance_to_sensors(&scenario.far_point()),
        methods: results,
    })
}
