//! Linear-Gaussian Kalman filter and its standardized variant (SKF).
//!
//! The SKF reweights each posterior mean with
//! `W = P⁻^{1/2} Diag(P⁻^{-1/2} K S Kᵀ P⁻^{-1/2})^{-1/2} P⁻^{-1/2}`,
//! the time-dependent analogue of the static generalized standardization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inverse::RESOLUTION_FLOOR;
use crate::linalg::{
    eigen_extremes, matrix_sqrt_pair_spd, relative_asymmetry, symmetrize, Covariance, SpdFactor,
    COVARIANCE_SYMMETRY_TOL,
};

/// Time-invariant state evolution `x_t = A x_{t−1} + q_t`, `q_t ~ N(0, Q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionModel {
    transition: DMatrix<f64>,
    process_cov: DMatrix<f64>,
}

impl EvolutionModel {
    /// `Q` must be symmetric positive semidefinite (zero is allowed).
    pub fn new(transition: DMatrix<f64>, process_cov: DMatrix<f64>) -> Result<Self> {
        let n = transition.nrows();
        if transition.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "transition matrix must be square",
                expected: n,
                actual: transition.ncols(),
            });
        }
        if process_cov.nrows() != n || process_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "process covariance vs. transition",
                expected: n,
                actual: process_cov.nrows(),
            });
        }
        check_psd(&process_cov)?;
        Ok(EvolutionModel {
            transition,
            process_cov,
        })
    }

    /// `A = I`, `Q = q·I`.
    pub fn random_walk(n: usize, q: f64) -> Result<Self> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "process variance must be finite and nonnegative, got {q}"
            )));
        }
        Self::new(DMatrix::identity(n, n), DMatrix::identity(n, n) * q)
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn process_cov(&self) -> &DMatrix<f64> {
        &self.process_cov
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let asym = relative_asymmetry(m);
    if asym > COVARIANCE_SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if m.nrows() == 0 || m.amax() == 0.0 {
        return Ok(());
    }
    let (min, _) = eigen_extremes(m)?;
    if min < -COVARIANCE_SYMMETRY_TOL * m.amax() {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Filter state after any of predict, update or standardize.
///
/// `mean`/`cov` always hold the latest moments; after a prediction they
/// equal `predicted_mean`/`predicted_cov`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub predicted_mean: Option<DVector<f64>>,
    pub predicted_cov: Option<DMatrix<f64>>,
    pub gain: Option<DMatrix<f64>>,
    pub innovation_cov: Option<DMatrix<f64>>,
    pub standardized: Option<DVector<f64>>,
    pub weights: Option<DMatrix<f64>>,
}

impl KalmanState {
    pub fn initial(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "initial covariance vs. mean",
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        check_psd(&cov)?;
        Ok(KalmanState {
            mean,
            cov,
            predicted_mean: None,
            predicted_cov: None,
            gain: None,
            innovation_cov: None,
            standardized: None,
            weights: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `x⁻ = A x`, `P⁻ = A P Aᵀ + Q`.
pub fn kf_predict(prev: &KalmanState, evo: &EvolutionModel) -> Result<KalmanState> {
    if prev.dim() != evo.dim() {
        return Err(Error::DimensionMismatch {
            context: "state vs. evolution model",
            expected: evo.dim(),
            actual: prev.dim(),
        });
    }
    let a = evo.transition();
    let mean = a * &prev.mean;
    let mut cov = a * &prev.cov * a.transpose() + evo.process_cov();
    symmetrize(&mut cov);
    Ok(KalmanState {
        predicted_mean: Some(mean.clone()),
        predicted_cov: Some(cov.clone()),
        mean,
        cov,
        gain: None,
        innovation_cov: None,
        standardized: None,
        weights: None,
    })
}

/// Measurement update with `S = L P⁻ Lᵀ + R`, `K = P⁻ Lᵀ S⁻¹`.
pub fn kf_update(
    pred: &KalmanState,
    l: &DMatrix<f64>,
    r: &Covariance,
    y: &DVector<f64>,
) -> Result<KalmanState> {
    let n = pred.dim();
    let m = l.nrows();
    if l.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "system matrix columns vs. state",
            expected: n,
            actual: l.ncols(),
        });
    }
    if r.dim() != m || y.len() != m {
        return Err(Error::DimensionMismatch {
            context: "measurement noise / data vs. system matrix rows",
            expected: m,
            actual: if r.dim() != m { r.dim() } else { y.len() },
        });
    }
    r.validate()?;
    let x_prior = pred.predicted_mean.as_ref().unwrap_or(&pred.mean);
    let p_prior = pred.predicted_cov.as_ref().unwrap_or(&pred.cov);

    let lp = l * p_prior;
    let mut s = r.add_to(&(&lp * l.transpose()));
    symmetrize(&mut s);
    let factor = SpdFactor::new(&s).map_err(|e| match e {
        Error::IllConditioned { condition, .. } => Error::FilterDivergence { condition },
        other => other,
    })?;
    // Σ⁻¹ L P⁻ is the transpose of the gain.
    let solved = factor.solve_mat(&lp);
    let gain = solved.transpose();
    let innovation = y - l * x_prior;
    let mean = x_prior + &gain * innovation;
    let mut cov = p_prior - lp.transpose() * &solved;
    symmetrize(&mut cov);
    Ok(KalmanState {
        mean,
        cov,
        predicted_mean: Some(x_prior.clone()),
        predicted_cov: Some(p_prior.clone()),
        gain: Some(gain),
        innovation_cov: Some(s),
        standardized: None,
        weights: None,
    })
}

/// Fills `weights` and `standardized = W · mean` from an updated state.
pub fn skf_standardize(state: &KalmanState) -> Result<KalmanState> {
    let (Some(p_prior), Some(gain), Some(s)) = (
        state.predicted_cov.as_ref(),
        state.gain.as_ref(),
        state.innovation_cov.as_ref(),
    ) else {
        return Err(Error::InvalidArgument(
            "standardization needs an updated state (predicted covariance, gain, innovation covariance)".into(),
        ));
    };
    let (root, inv_root) = matrix_sqrt_pair_spd(p_prior)?;
    // Row i of P⁻^{-1/2} K gives the i-th diagonal entry of P⁻^{-1/2} K S Kᵀ P⁻^{-1/2}.
    let b = &inv_root * gain;
    let bs = &b * s;
    let mut d = DVector::zeros(b.nrows());
    for i in 0..b.nrows() {
        let value = bs.row(i).dot(&b.row(i));
        if value <= RESOLUTION_FLOOR {
            return Err(Error::DegenerateResolution { index: i, value });
        }
        d[i] = value;
    }
    let mut left = root;
    for (j, mut col) in left.column_iter_mut().enumerate() {
        col /= d[j].sqrt();
    }
    let weights = left * inv_root;
    let standardized = &weights * &state.mean;
    let mut out = state.clone();
    out.weights = Some(weights);
    out.standardized = Some(standardized);
    Ok(out)
}

/// Predict/update(/standardize) over a measurement series from `(x₀, P₀)`.
pub fn run_filter(
    y_series: &[DVector<f64>],
    l: &DMatrix<f64>,
    evo: &EvolutionModel,
    r: &Covariance,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    standardize: bool,
) -> Result<Vec<KalmanState>> {
    if y_series.is_empty() {
        return Err(Error::InvalidArgument("measurement series is empty".into()));
    }
    let mut state = KalmanState::initial(x0.clone(), p0.clone())?;
    let mut out = Vec::with_capacity(y_series.len());
    for (step, y) in y_series.iter().enumerate() {
        let next = filter_step(&state, l, evo, r, y, standardize).map_err(|e| Error::FilterStep {
            step,
            source: Box::new(e),
        })?;
        state = next.clone();
        out.push(next);
    }
    Ok(out)
}

fn filter_step(
    state: &KalmanState,
    l: &DMatrix<f64>,
    evo: &EvolutionModel,
    r: &Covariance,
    y: &DVector<f64>,
    standardize: bool,
) -> Result<KalmanState> {
    let pred = kf_predict(state, evo)?;
    let updated = kf_update(&pred, l, r, y)?;
    if standardize {
        skf_standardize(&updated)
    } else {
        Ok(updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn identity_prediction_is_a_copy() {
        let s = KalmanState::initial(DVector::from_vec(vec![1.0, -2.0]), DMatrix::identity(2, 2) * 3.0).unwrap();
        let evo = EvolutionModel::random_walk(2, 0.0).unwrap();
        let p = kf_predict(&s, &evo).unwrap();
        assert_eq!(p.mean, s.mean);
        assert_eq!(p.cov, s.cov);
    }

    #[test]
    fn zero_transition_predicts_process_noise() {
        let s = KalmanState::initial(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]);
        let evo = EvolutionModel::new(DMatrix::zeros(2, 2), q.clone()).unwrap();
        let p = kf_predict(&s, &evo).unwrap();
        assert_eq!(p.mean, DVector::zeros(2));
        assert_eq!(p.cov, q);
    }

    #[test]
    fn scalar_update_and_standardization() {
        let s = KalmanState::initial(DVector::zeros(1), scalar(1.0)).unwrap();
        let evo = EvolutionModel::random_walk(1, 0.0).unwrap();
        let pred = kf_predict(&s, &evo).unwrap();
        let up = kf_update(&pred, &scalar(1.0), &Covariance::identity(1), &DVector::from_vec(vec![2.0])).unwrap();
        assert_relative_eq!(up.gain.as_ref().unwrap()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(up.innovation_cov.as_ref().unwrap()[(0, 0)], 2.0);
        assert_relative_eq!(up.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(up.cov[(0, 0)], 0.5, epsilon = 1e-15);
        let z = skf_standardize(&up).unwrap();
        assert_relative_eq!(z.weights.as_ref().unwrap()[(0, 0)], 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(z.standardized.as_ref().unwrap()[0], 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let s = KalmanState::initial(x.clone(), DMatrix::identity(2, 2)).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 2.0]);
        let up = kf_update(&s, &l, &Covariance::scaled(2, 0.1), &(&l * &x)).unwrap();
        assert!((up.mean - x).amax() < 1e-15);
    }

    #[test]
    fn zero_mean_standardizes_to_zero() {
        let s = KalmanState::initial(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let l = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let up = kf_update(&s, &l, &Covariance::identity(1), &DVector::zeros(1)).unwrap();
        let z = skf_standardize(&up).unwrap();
        assert_eq!(z.standardized.unwrap(), DVector::zeros(2));
    }

    #[test]
    fn unobservable_node_is_degenerate() {
        let s = KalmanState::initial(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let l = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let up = kf_update(&s, &l, &Covariance::identity(1), &DVector::from_vec(vec![1.0])).unwrap();
        assert!(matches!(
            skf_standardize(&up),
            Err(Error::DegenerateResolution { index: 1, .. })
        ));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let l = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let evo = EvolutionModel::random_walk(1, 0.0).unwrap();
        let ys = vec![DVector::from_vec(vec![1.0, 0.0])];
        let err = run_filter(&ys, &l, &evo, &Covariance::scaled(2, 1e-14), &DVector::zeros(1), &scalar(1.0), false)
            .unwrap_err();
        match err {
            Error::FilterStep { step: 0, source } => {
                assert!(matches!(*source, Error::FilterDivergence { .. }))
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(run_filter(&[], &l, &evo, &Covariance::identity(2), &DVector::zeros(1), &scalar(1.0), false).is_err());
    }

    #[test]
    fn rejects_indefinite_process_noise() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(EvolutionModel::new(DMatrix::identity(2, 2), q).is_err());
    }
}
