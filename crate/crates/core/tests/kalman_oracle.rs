mod common;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use common::{gaussian_matrix, gaussian_vector, lu_inverse, max_abs, random_spd, rng};
use stdloc::kalman::{kf_predict, kf_update, run_filter, skf_standardize, EvolutionModel, KalmanState};
use stdloc::linalg::{relative_asymmetry, Covariance};

/// Information-form recursion: `P⁻¹ = P⁻⁻¹ + Lᵀ R⁻¹ L`, `P⁻¹ x = P⁻⁻¹ x⁻ + Lᵀ R⁻¹ y`.
fn information_filter(
    ys: &[DVector<f64>],
    l: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let r_inv = lu_inverse(r);
    let (mut x, mut p) = (x0.clone(), p0.clone());
    let mut out = Vec::new();
    for y in ys {
        let xp = a * &x;
        let pp = a * &p * a.transpose() + q;
        let pp_inv = lu_inverse(&pp);
        let info = &pp_inv + l.transpose() * &r_inv * l;
        p = lu_inverse(&info);
        x = &p * (&pp_inv * xp + l.transpose() * &r_inv * y);
        out.push((x.clone(), p.clone()));
    }
    out
}

fn spectral(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f)) * e.eigenvectors.transpose()
}

#[test]
fn filter_matches_information_form() {
    for seed in 0..10 {
        let mut g = rng(500 + seed);
        let (m, n, steps) = (4, 6, 8);
        let l = gaussian_matrix(&mut g, m, n);
        let a = gaussian_matrix(&mut g, n, n) * 0.3;
        let q = random_spd(&mut g, n, 0.1);
        let r = random_spd(&mut g, m, 0.2);
        let x0 = gaussian_vector(&mut g, n);
        let p0 = random_spd(&mut g, n, 0.5);
        let ys: Vec<DVector<f64>> = (0..steps).map(|_| gaussian_vector(&mut g, m)).collect();

        let evo = EvolutionModel::new(a.clone(), q.clone()).unwrap();
        let states = run_filter(&ys, &l, &evo, &Covariance::Dense(r.clone()), &x0, &p0, false).unwrap();
        let oracle = information_filter(&ys, &l, &a, &q, &r, &x0, &p0);
        for (s, (x, p)) in states.iter().zip(&oracle) {
            assert!((&s.mean - x).amax() < 1e-10 * (1.0 + x.amax()), "seed {seed}");
            assert!(max_abs(&(&s.cov - p)) < 1e-10 * (1.0 + max_abs(p)), "seed {seed}");
        }
    }
}

#[test]
fn skf_weights_follow_the_literal_formula() {
    for seed in 0..10 {
        let mut g = rng(600 + seed);
        let (m, n) = (4, 7);
        let l = gaussian_matrix(&mut g, m, n);
        let r = random_spd(&mut g, m, 0.2);
        let evo = EvolutionModel::new(DMatrix::identity(n, n), random_spd(&mut g, n, 0.1)).unwrap();
        let s0 = KalmanState::initial(gaussian_vector(&mut g, n), random_spd(&mut g, n, 0.5)).unwrap();
        let y = gaussian_vector(&mut g, m);
        let up = kf_update(&kf_predict(&s0, &evo).unwrap(), &l, &Covariance::Dense(r), &y).unwrap();
        let got = skf_standardize(&up).unwrap();

        let pp = up.predicted_cov.as_ref().unwrap();
        let k = up.gain.as_ref().unwrap();
        let s = up.innovation_cov.as_ref().unwrap();
        let root = spectral(pp, f64::sqrt);
        let inv_root = spectral(pp, |v| 1.0 / v.sqrt());
        let inner = &inv_root * k * s * k.transpose() * &inv_root;
        let d = DMatrix::from_diagonal(&inner.diagonal().map(|v| 1.0 / v.sqrt()));
        let w = &root * d * &inv_root;
        let z = &w * &up.mean;
        assert!(max_abs(&(got.weights.as_ref().unwrap() - &w)) < 1e-10 * max_abs(&w), "seed {seed}");
        assert!((got.standardized.as_ref().unwrap() - z).amax() < 1e-10, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The updated covariance agrees with the Joseph form and stays symmetric.
    #[test]
    fn update_covariance_equals_joseph_form(seed in any::<u64>(), m in 2usize..6, n in 2usize..8) {
        let mut g = rng(seed);
        let l = gaussian_matrix(&mut g, m, n);
        let r = random_spd(&mut g, m, 0.1);
        let s0 = KalmanState::initial(gaussian_vector(&mut g, n), random_spd(&mut g, n, 0.2)).unwrap();
        let y = gaussian_vector(&mut g, m);
        let up = kf_update(&s0, &l, &Covariance::Dense(r.clone()), &y).unwrap();
        let k = up.gain.as_ref().unwrap();
        let i_kl = DMatrix::identity(n, n) - k * &l;
        let joseph = &i_kl * &s0.cov * i_kl.transpose() + k * r * k.transpose();
        prop_assert!(max_abs(&(&up.cov - &joseph)) < 1e-10 * (1.0 + max_abs(&joseph)));
        prop_assert!(relative_asymmetry(&up.cov) == 0.0);
        // Updating never increases the variance of any component.
        for i in 0..n {
            prop_assert!(up.cov[(i, i)] <= s0.cov[(i, i)] * (1.0 + 1e-12));
        }
    }
}
