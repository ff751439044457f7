//! Lower bounds on the probability that the standardized argmax hits the
//! true node under Gaussian noise.
//!
//! For a node `k` the bound is `Ga(θ² λ_min(Σ) q_k / (2 λ_max(C)); m/2, 1)`
//! with `Σ = L̂L̂ᵀ + C`, `q_k = L̂_kᵀ Σ⁻¹ L̂_k` and `θ` the smallest scalar
//! rejection between `L̂_k` and any column outside its feasible set. The SNR
//! variant replaces `q_k/λ_max(C)` by `SNR/λ_max(Σ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::reference_basis;
use crate::inverse::{feasible_set_with, nsp_with, FeasibleSet, FEASIBLE_TOLERANCE};
use crate::linalg::{Covariance, SpdFactor};
use crate::special::reg_lower_gamma;

pub use crate::linalg::eigen_extremes;

/// Columns whose entries sum to less than this (relative to their norm) count as referenced.
const REFERENCED_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    Eigen,
    Snr,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub node: usize,
    pub theta: f64,
    /// `L̂_kᵀ Σ⁻¹ L̂_k`.
    pub quadratic_form: f64,
    pub lambda_min_sigma: f64,
    pub lambda_max_sigma: f64,
    pub lambda_max_c: f64,
    /// Shape parameter `m/2` of the gamma distribution.
    pub shape: f64,
    pub snr: Option<f64>,
    pub probability: f64,
    pub variant: BoundVariant,
}

/// `Ga(arg; shape, 1)` with the argument `θ² λ_min q / (2 λ_max)`.
pub fn bound_probability(theta: f64, lambda_min: f64, quadratic_form: f64, lambda_max: f64, shape: f64) -> Result<f64> {
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "largest eigenvalue must be positive, got {lambda_max}"
        )));
    }
    let arg = theta * theta * lambda_min * quadratic_form / (2.0 * lambda_max);
    reg_lower_gamma(shape, arg.max(0.0))
}

/// Tightest admissible `θ = min_{i ∉ S} (1 − |nsp_Σ(L̂_k, L̂_i)|)`.
pub fn theta_for(k: usize, lhat: &DMatrix<f64>, sigma: &DMatrix<f64>, feasible: &FeasibleSet) -> Result<f64> {
    check_node(k, lhat)?;
    let factor = SpdFactor::new(sigma)?;
    theta_with(k, lhat, &factor, feasible)
}

fn theta_with(k: usize, lhat: &DMatrix<f64>, sigma: &SpdFactor, feasible: &FeasibleSet) -> Result<f64> {
    let target = lhat.column(k).into_owned();
    let mut theta = f64::INFINITY;
    for (i, col) in lhat.column_iter().enumerate() {
        if feasible.contains(i) || i == k {
            continue;
        }
        let p = nsp_with(sigma, &target, &col.into_owned())?;
        theta = theta.min(1.0 - p.abs());
    }
    if theta.is_infinite() {
        return Err(Error::TrivialProblem { node: k });
    }
    Ok(theta)
}

fn check_node(k: usize, lhat: &DMatrix<f64>) -> Result<()> {
    if k >= lhat.ncols() {
        return Err(Error::InvalidArgument(format!(
            "node {k} out of range (n = {})",
            lhat.ncols()
        )));
    }
    Ok(())
}

fn check_noise(lhat: &DMatrix<f64>, c: &Covariance) -> Result<()> {
    c.validate()?;
    if c.dim() != lhat.nrows() {
        return Err(Error::DimensionMismatch {
            context: "noise covariance vs. system matrix rows",
            expected: lhat.nrows(),
            actual: c.dim(),
        });
    }
    Ok(())
}

struct Marginal {
    lhat: DMatrix<f64>,
    factor: SpdFactor,
    lambda_min: f64,
    lambda_max: f64,
}

fn marginal(lhat: DMatrix<f64>, c: &Covariance) -> Result<Marginal> {
    let sigma = c.add_to(&(&lhat * lhat.transpose()));
    let factor = SpdFactor::new(&sigma)?;
    let (lambda_min, lambda_max) = eigen_extremes(&sigma)?;
    Ok(Marginal {
        lhat,
        factor,
        lambda_min,
        lambda_max,
    })
}

fn theta_and_quadratic(k: usize, mg: &Marginal) -> Result<(f64, f64)> {
    let target = mg.lhat.column(k).into_owned();
    let feasible = feasible_set_with(&mg.factor, &mg.lhat, &target, FEASIBLE_TOLERANCE)?;
    let theta = theta_with(k, &mg.lhat, &mg.factor, &feasible)?;
    Ok((theta, mg.factor.quad_form(&target)))
}

/// Eigenvalue form of the bound. With a prior, the columns are `L Γ^{1/2}`.
pub fn localization_bound(
    k: usize,
    lhat: &DMatrix<f64>,
    c: &Covariance,
    prior: Option<&Covariance>,
) -> Result<BoundReport> {
    check_node(k, lhat)?;
    check_noise(lhat, c)?;
    let a = match prior {
        Some(gamma) => {
            if gamma.dim() != lhat.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "prior covariance vs. system matrix columns",
                    expected: lhat.ncols(),
                    actual: gamma.dim(),
                });
            }
            gamma.sqrt()?.right_multiply(lhat)
        }
        None => lhat.clone(),
    };
    let mg = marginal(a, c)?;
    let (theta, quadratic_form) = theta_and_quadratic(k, &mg)?;
    let (_, lambda_max_c) = c.eigen_extremes()?;
    let shape = lhat.nrows() as f64 / 2.0;
    let probability = bound_probability(theta, mg.lambda_min, quadratic_form, lambda_max_c, shape)?;
    Ok(BoundReport {
        node: k,
        theta,
        quadratic_form,
        lambda_min_sigma: mg.lambda_min,
        lambda_max_sigma: mg.lambda_max,
        lambda_max_c,
        shape,
        snr: None,
        probability,
        variant: BoundVariant::Eigen,
    })
}

/// SNR form of the bound; requires i.i.d. noise `C = σ²I`.
pub fn snr_bound(k: usize, lhat: &DMatrix<f64>, c: &Covariance, snr: f64) -> Result<BoundReport> {
    check_node(k, lhat)?;
    check_noise(lhat, c)?;
    let Some(sigma2) = c.as_scalar() else {
        return Err(Error::InvalidArgument(
            "the SNR bound requires a noise covariance of the form σ²I".into(),
        ));
    };
    if !(snr >= 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be nonnegative, got {snr}")));
    }
    let mg = marginal(lhat.clone(), c)?;
    let (theta, quadratic_form) = theta_and_quadratic(k, &mg)?;
    let shape = lhat.nrows() as f64 / 2.0;
    let probability = bound_probability(theta, mg.lambda_min, snr, mg.lambda_max, shape)?;
    Ok(BoundReport {
        node: k,
        theta,
        quadratic_form,
        lambda_min_sigma: mg.lambda_min,
        lambda_max_sigma: mg.lambda_max,
        lambda_max_c: sigma2,
        shape,
        snr: Some(snr),
        probability,
        variant: BoundVariant::Snr,
    })
}

/// Expresses a problem with common-average referenced columns in the
/// (m−1)-dimensional zero-mean subspace.
///
/// Referenced columns are orthogonal to the all-ones vector, so `Σ` carries
/// the bare noise variance along that direction and `λ_min(Σ)` collapses to
/// `λ_min(C)`. Standardized estimates computed from `Uᵀy` with noise `UᵀCU`
/// are identical whenever `C` has the ones vector as an eigenvector, so the
/// bound may be evaluated in the reduced coordinates instead.
pub fn reduce_referenced(lhat: &DMatrix<f64>, c: &Covariance) -> Result<(DMatrix<f64>, Covariance)> {
    check_noise(lhat, c)?;
    let m = lhat.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "reduction needs at least two sensors".into(),
        ));
    }
    for (k, col) in lhat.column_iter().enumerate() {
        if col.sum().abs() > REFERENCED_TOL * col.norm().max(f64::MIN_POSITIVE) * (m as f64).sqrt() {
            return Err(Error::InvalidArgument(format!(
                "column {k} is not common-average referenced"
            )));
        }
    }
    let u = reference_basis(m);
    let reduced_c = match c.as_scalar() {
        Some(s) => Covariance::scaled(m - 1, s),
        None => {
            let dense = u.transpose() * c.to_dense() * &u;
            Covariance::Dense((&dense + dense.transpose()) * 0.5)
        }
    };
    Ok((u.transpose() * lhat, reduced_c))
}

/// Reduced-space coordinates of a referenced data vector.
pub fn reduce_data(y: &DVector<f64>) -> DVector<f64> {
    reference_basis(y.len()).transpose() * y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orthogonal_columns_give_unit_theta() {
        let l = DMatrix::identity(3, 3);
        let sigma = DMatrix::identity(3, 3) * 2.0;
        let empty = FeasibleSet { indices: vec![0], tolerance: FEASIBLE_TOLERANCE };
        assert_relative_eq!(theta_for(0, &l, &sigma, &empty).unwrap(), 1.0);
    }

    #[test]
    fn single_correlated_column_sets_theta() {
        let c09 = (1.0f64 - 0.81).sqrt();
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.0, c09, 0.0, 0.0, 0.0, 1.0]);
        let sigma = DMatrix::identity(3, 3);
        let fs = FeasibleSet { indices: vec![0], tolerance: FEASIBLE_TOLERANCE };
        assert_relative_eq!(theta_for(0, &l, &sigma, &fs).unwrap(), 0.1, epsilon = 1e-14);
        // Anti-parallel orientation gives the same θ under the |·| convention.
        let mut flipped = l.clone();
        flipped.set_column(1, &(-l.column(1)));
        assert_relative_eq!(theta_for(0, &flipped, &sigma, &fs).unwrap(), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn all_parallel_columns_are_trivial() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let c = Covariance::identity(2);
        assert!(matches!(
            localization_bound(0, &l, &c, None),
            Err(Error::TrivialProblem { node: 0 })
        ));
    }

    #[test]
    fn limits_in_theta_and_noise() {
        assert_eq!(bound_probability(0.0, 1.0, 5.0, 1.0, 2.0).unwrap(), 0.0);
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3, 0.0, 0.1, 1.0]);
        let loud = localization_bound(0, &l, &Covariance::scaled(3, 1.0), None).unwrap();
        let quiet = localization_bound(0, &l, &Covariance::scaled(3, 1e-8), None).unwrap();
        assert!(loud.probability < quiet.probability);
        assert!(quiet.probability > 1.0 - 1e-9);
        assert!(matches!(
            snr_bound(0, &l, &Covariance::scaled(3, 1.0), 0.0).unwrap().probability,
            p if p == 0.0
        ));
    }

    #[test]
    fn snr_variant_rejects_non_scalar_noise() {
        let l = DMatrix::identity(2, 2);
        let c = Covariance::Diagonal(DVector::from_vec(vec![1.0, 2.0]));
        assert!(snr_bound(0, &l, &c, 10.0).is_err());
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let l = DMatrix::from_row_slice(3, 4, &[1.0, 0.2, 0.0, 0.4, 0.1, 1.0, 0.3, -0.2, 0.0, 0.1, 1.0, 0.5]);
        for &s in &[1e-4, 1e-2, 1.0, 100.0] {
            let c = Covariance::scaled(3, s);
            for k in 0..4 {
                let e = localization_bound(k, &l, &c, None).unwrap();
                let r = snr_bound(k, &l, &c, l.column(k).norm_squared() / s).unwrap();
                for p in [e.probability, r.probability] {
                    assert!((0.0..=1.0).contains(&p));
                }
                assert!(e.theta > 0.0 && e.theta <= 1.0);
            }
        }
    }

    #[test]
    fn reduction_removes_the_reference_direction() {
        let mut l = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 0.3, 0.4, 0.9]);
        for mut col in l.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let c = Covariance::scaled(3, 0.1);
        let (lr, cr) = reduce_referenced(&l, &c).unwrap();
        assert_eq!(lr.nrows(), 2);
        assert_eq!(cr, Covariance::scaled(2, 0.1));
        // Gram matrices agree because the basis is orthonormal on the zero-mean subspace.
        assert!((lr.transpose() * &lr - l.transpose() * &l).amax() < 1e-14);
        let unreferenced = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(reduce_referenced(&unreferenced, &Covariance::identity(2)).is_err());
    }
}
