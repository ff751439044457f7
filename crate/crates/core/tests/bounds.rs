mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{gaussian_matrix, rng};
use stdloc::bounds::{bound_probability, localization_bound, reduce_referenced, snr_bound};
use stdloc::config::GeometryConfig;
use stdloc::experiments::{wilson_half_width, Setup, WILSON_Z_99};
use stdloc::forward::common_average_reference;
use stdloc::geometry::Point;
use stdloc::inverse::{GaussianModel, InverseOperator};
use stdloc::linalg::Covariance;
use stdloc::measurement::{noise_sigma, snr_of, to_decibels};
use stdloc::special::reg_lower_gamma;

#[test]
fn probability_is_the_regularized_gamma_of_the_scaled_margin() {
    let (theta, lmin, q, lmax, shape) = (0.2, 3.0, 40.0, 0.5, 7.5);
    let p = bound_probability(theta, lmin, q, lmax, shape).unwrap();
    let x = theta * theta * lmin * q / (2.0 * lmax);
    assert_eq!(p, reg_lower_gamma(shape, x).unwrap());
}

#[test]
fn empirical_rate_dominates_bound_on_random_problems() {
    for seed in 0..6 {
        let mut g = rng(40 + seed);
        let (m, n, k) = (6, 9, 0);
        let l = gaussian_matrix(&mut g, m, n);
        let sigma = 0.05 + 0.1 * seed as f64;
        let c = Covariance::scaled(m, sigma * sigma);
        let bound = localization_bound(k, &l, &c, None).unwrap().probability;
        let op = InverseOperator::new(&l, &GaussianModel::new(Covariance::identity(n), c).unwrap()).unwrap();
        let samples = 4000;
        let hits = (0..samples)
            .filter(|_| {
                let y = l.column(k) + DVector::from_fn(m, |_, _| sigma * g.sample::<f64, _>(StandardNormal));
                op.standardized_values(&y).iamax() == k
            })
            .count();
        let rate = hits as f64 / samples as f64;
        assert!(rate + wilson_half_width(rate, samples, WILSON_Z_99) >= bound, "seed {seed}: {rate} < {bound}");
    }
}

#[test]
fn explicit_prior_equals_prescaled_columns() {
    let mut g = rng(3);
    let l = gaussian_matrix(&mut g, 5, 7);
    let gamma = DVector::from_fn(7, |_, _| g.gen_range(0.5..2.0));
    let prior = Covariance::Diagonal(gamma.clone());
    let c = Covariance::scaled(5, 0.01);
    let a = localization_bound(2, &l, &c, Some(&prior)).unwrap();
    let b = localization_bound(2, &prior.sqrt().unwrap().right_multiply(&l), &c, None).unwrap();
    assert_eq!(a.probability, b.probability);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// More noise never raises either form of the bound.
    #[test]
    fn bounds_are_nonincreasing_in_noise(seed in any::<u64>(), s1 in 0.01..0.5f64, factor in 1.0..4.0f64) {
        let mut g = rng(seed);
        let mut l = gaussian_matrix(&mut g, 6, 8);
        for mut col in l.column_iter_mut() {
            let mut v = col.clone_owned();
            common_average_reference(&mut v);
            col.copy_from(&v);
        }
        let (lr, _) = reduce_referenced(&l, &Covariance::identity(6)).unwrap();
        let s2 = s1 * factor;
        let e = |s: f64| localization_bound(1, &lr, &Covariance::scaled(5, s * s), None).unwrap().probability;
        let snr = |s: f64| {
            let c = Covariance::scaled(5, s * s);
            snr_bound(1, &lr, &c, lr.column(1).norm_squared() / (s * s)).unwrap().probability
        };
        prop_assert!(e(s2) <= e(s1) + 1e-15);
        prop_assert!(snr(s2) <= snr(s1) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&e(s1)));
        prop_assert!(snr(s1) <= e(s1) + 1e-15);
    }
}

#[test]
fn snr_follows_the_noise_convention() {
    let setup = Setup::build(&GeometryConfig::default()).unwrap();
    let m = setup.inverse.sensor_count() as f64;
    for k in [0, 100, 300, 450] {
        for p in [1.0, 5.0, 15.0] {
            // σ = p/100 · RMS(L_k) gives ‖L_k‖²/σ² = m · 10⁴ / p².
            let want = m * 1e4 / (p * p);
            let got = snr_of(&setup.inverse, k, p).unwrap();
            assert!((got - want).abs() < 1e-9 * want);
        }
    }
    assert!((to_decibels(6400.0) - 38.061_799_739_838_87).abs() < 1e-12);
}

/// Regression values for the default geometry at (0, 0.9) and 5 % noise.
#[test]
fn default_geometry_bound_at_shallow_node() {
    let setup = Setup::build(&GeometryConfig::default()).unwrap();
    let inv = &setup.inverse;
    let k = inv.geometry().nearest_node(&Point::new(0.0, 0.9));
    assert_eq!(k, 445);
    let sigma = noise_sigma(&inv.column(k), 5.0).unwrap();
    let (lr, c) = reduce_referenced(inv.entries(), &Covariance::scaled(inv.sensor_count(), sigma * sigma)).unwrap();
    let eig = localization_bound(k, &lr, &c, None).unwrap();
    assert_eq!(eig.shape, 7.5);
    assert!((eig.theta - 0.050_493_435_957_782_995).abs() < 1e-9);
    assert!((eig.probability - 0.001_334_259_174_804_007_4).abs() < 1e-9);
    let s = snr_bound(k, &lr, &c, 6400.0).unwrap();
    assert!(s.probability <= eig.probability);
    assert!((s.probability - 2.647_767_271_857_716e-7).abs() < 1e-12);
}
