//! Gaussian linear inversion: the Bayesian minimum norm estimate (BMNE), the
//! resolution matrix, diagonal and generalized standardization, and the
//! projection diagnostics that characterize which nodes can win the argmax.
//!
//! With prior `x ~ N(0, Γ)` and noise `q ~ N(0, C)` the MAP estimate is
//! `x̂ = Γ Lᵀ Σ⁻¹ y` with `Σ = L Γ Lᵀ + C`. Only the m×m matrix `Σ` is ever
//! factorized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_spd, matrix_sqrt_pair_spd, Covariance, SpdFactor};

/// Relative tolerance for membership in the argmax set.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Standardization denominators at or below this value are rejected.
pub const RESOLUTION_FLOOR: f64 = 1e-14;
/// Default tolerance on `1 − |nsp|` for feasible-set membership.
pub const FEASIBLE_TOLERANCE: f64 = 1e-8;

/// Prior covariance `Γ` (n×n) and noise covariance `C` (m×m).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    prior: Covariance,
    noise: Covariance,
}

impl GaussianModel {
    pub fn new(prior: Covariance, noise: Covariance) -> Result<Self> {
        prior.validate()?;
        noise.validate()?;
        Ok(GaussianModel { prior, noise })
    }

    pub fn prior(&self) -> &Covariance {
        &self.prior
    }

    pub fn noise(&self) -> &Covariance {
        &self.noise
    }

    fn check_dims(&self, l: &DMatrix<f64>) -> Result<()> {
        if self.prior.dim() != l.ncols() {
            return Err(Error::DimensionMismatch {
                context: "prior covariance vs. system matrix columns",
                expected: l.ncols(),
                actual: self.prior.dim(),
            });
        }
        if self.noise.dim() != l.nrows() {
            return Err(Error::DimensionMismatch {
                context: "noise covariance vs. system matrix rows",
                expected: l.nrows(),
                actual: self.noise.dim(),
            });
        }
        Ok(())
    }

    /// Factor of the marginal measurement covariance `Σ = L Γ Lᵀ + C`,
    /// together with `L Γ`.
    pub fn marginal(&self, l: &DMatrix<f64>) -> Result<(DMatrix<f64>, SpdFactor)> {
        self.check_dims(l)?;
        let l_gamma = self.prior.right_multiply(l);
        let sigma = self.noise.add_to(&(&l_gamma * l.transpose()));
        Ok((l_gamma, SpdFactor::new(&sigma)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionKind {
    Bmne,
    Standardized,
    Skf,
}

/// One value per node plus the indices attaining the largest magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    values: DVector<f64>,
    kind: ReconstructionKind,
    argmax_set: Vec<usize>,
}

/// Indices whose magnitude is within relative `tol` of the maximum magnitude.
pub fn argmax_set(values: &DVector<f64>, tol: f64) -> Vec<usize> {
    let max = values.amax();
    if max == 0.0 {
        return (0..values.len()).collect();
    }
    let threshold = max * (1.0 - tol);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= threshold)
        .map(|(i, _)| i)
        .collect()
}

impl Reconstruction {
    pub fn new(values: DVector<f64>, kind: ReconstructionKind) -> Self {
        assert!(!values.is_empty(), "reconstruction needs at least one node");
        let argmax_set = argmax_set(&values, TIE_TOLERANCE);
        Reconstruction {
            values,
            kind,
            argmax_set,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn kind(&self) -> ReconstructionKind {
        self.kind
    }

    pub fn argmax_set(&self) -> &[usize] {
        &self.argmax_set
    }

    /// First index of the argmax set.
    pub fn argmax(&self) -> usize {
        self.argmax_set[0]
    }

    pub fn argmax_with_tolerance(&self, tol: f64) -> Vec<usize> {
        argmax_set(&self.values, tol)
    }

    /// Index of the largest signed value.
    pub fn argmax_signed(&self) -> usize {
        self.values.imax()
    }

    /// Index of the smallest signed value.
    pub fn argmin_signed(&self) -> usize {
        self.values.imin()
    }

    /// Values scaled to unit maximum magnitude (unchanged when all zero).
    pub fn normalized(&self) -> DVector<f64> {
        let max = self.values.amax();
        if max == 0.0 {
            self.values.clone()
        } else {
            &self.values / max
        }
    }
}

fn check_measurement(l: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if y.len() != l.nrows() {
        return Err(Error::DimensionMismatch {
            context: "measurement length",
            expected: l.nrows(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// MAP estimate `x̂ = Γ Lᵀ (L Γ Lᵀ + C)⁻¹ y`.
pub fn bmne_map(l: &DMatrix<f64>, model: &GaussianModel, y: &DVector<f64>) -> Result<Reconstruction> {
    check_measurement(l, y)?;
    let (l_gamma, sigma) = model.marginal(l)?;
    let values = l_gamma.transpose() * sigma.solve_vec(y);
    Ok(Reconstruction::new(values, ReconstructionKind::Bmne))
}

/// Resolution matrix `R = Γ Lᵀ (L Γ Lᵀ + C)⁻¹ L`.
pub fn resolution_matrix(l: &DMatrix<f64>, model: &GaussianModel) -> Result<DMatrix<f64>> {
    let (l_gamma, sigma) = model.marginal(l)?;
    Ok(l_gamma.transpose() * sigma.solve_mat(l))
}

/// `z_k = x̂_k / √R_kk`.
pub fn standardize_diagonal(xhat: &Reconstruction, r: &DMatrix<f64>) -> Result<Reconstruction> {
    let n = xhat.values().len();
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "resolution matrix vs. reconstruction",
            expected: n,
            actual: r.nrows(),
        });
    }
    let mut z = xhat.values().clone();
    for k in 0..n {
        let rkk = r[(k, k)];
        if rkk <= RESOLUTION_FLOOR {
            return Err(Error::DegenerateResolution { index: k, value: rkk });
        }
        z[k] /= rkk.sqrt();
    }
    Ok(Reconstruction::new(z, ReconstructionKind::Standardized))
}

fn check_floor(d: &DVector<f64>) -> Result<()> {
    for (index, &value) in d.iter().enumerate() {
        if value <= RESOLUTION_FLOOR {
            return Err(Error::DegenerateResolution { index, value });
        }
    }
    Ok(())
}

/// Generalized standardization transform
/// `T = Γ^{1/2} Diag(Γ^{1/2} Lᵀ Σ⁻¹ L Γ^{1/2})^{1/2} Γ^{-1/2}`.
///
/// For diagonal `Γ` this is `Diag(R)^{1/2}`.
pub fn generalized_weights(l: &DMatrix<f64>, model: &GaussianModel) -> Result<DMatrix<f64>> {
    let (_, sigma) = model.marginal(l)?;
    match model.prior() {
        Covariance::Dense(gamma) => {
            let (root, inv_root) = matrix_sqrt_pair_spd(gamma)?;
            let a = l * &root;
            let d = whitened_column_energy(&a, &sigma);
            check_floor(&d)?;
            let mut scaled = root;
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= d[j].sqrt();
            }
            Ok(scaled * inv_root)
        }
        prior => {
            let root = prior.sqrt()?;
            let a = root.right_multiply(l);
            let d = whitened_column_energy(&a, &sigma);
            check_floor(&d)?;
            Ok(DMatrix::from_diagonal(&d.map(f64::sqrt)))
        }
    }
}

/// `a_iᵀ Σ⁻¹ a_i` for every column of `a`.
fn whitened_column_energy(a: &DMatrix<f64>, sigma: &SpdFactor) -> DVector<f64> {
    let solved = sigma.solve_mat(a);
    DVector::from_iterator(
        a.ncols(),
        a.column_iter()
            .zip(solved.column_iter())
            .map(|(c, s)| c.dot(&s)),
    )
}

/// Precomputed linear maps from measurements to BMNE and standardized
/// reconstructions for one `(L, Γ, C)`.
///
/// Both estimates are linear in `y`, so repeated solves (Monte-Carlo loops,
/// time series) reduce to one n×m matrix-vector product each.
#[derive(Clone, Debug)]
pub struct InverseOperator {
    bmne: DMatrix<f64>,
    standardized: DMatrix<f64>,
    standardization_diag: DVector<f64>,
    sigma: SpdFactor,
}

impl InverseOperator {
    pub fn new(l: &DMatrix<f64>, model: &GaussianModel) -> Result<Self> {
        let (l_gamma, sigma) = model.marginal(l)?;
        // Σ⁻¹ L Γ, whose transpose is Γ Lᵀ Σ⁻¹.
        let solved = sigma.solve_mat(&l_gamma);
        let bmne = solved.transpose();
        let (standardized, standardization_diag) = match model.prior() {
            Covariance::Dense(gamma) => {
                let root = crate::linalg::matrix_sqrt_psd(gamma)?;
                let a = l * &root;
                let solved_a = sigma.solve_mat(&a);
                let d = DVector::from_iterator(
                    a.ncols(),
                    a.column_iter().zip(solved_a.column_iter()).map(|(c, s)| c.dot(&s)),
                );
                check_floor(&d)?;
                // T⁻¹ Γ Lᵀ Σ⁻¹ = Γ^{1/2} D^{-1/2} Γ^{1/2} Lᵀ Σ⁻¹ = Γ^{1/2} D^{-1/2} (Σ⁻¹ L Γ^{1/2})ᵀ
                let mut inner = solved_a.transpose();
                for (i, mut row) in inner.row_iter_mut().enumerate() {
                    row /= d[i].sqrt();
                }
                (root * inner, d)
            }
            _ => {
                let d = DVector::from_iterator(
                    l.ncols(),
                    l.column_iter().zip(bmne.row_iter()).map(|(c, r)| r.transpose().dot(&c)),
                );
                check_floor(&d)?;
                let mut k = bmne.clone();
                for (i, mut row) in k.row_iter_mut().enumerate() {
                    row /= d[i].sqrt();
                }
                (k, d)
            }
        };
        Ok(InverseOperator {
            bmne,
            standardized,
            standardization_diag,
            sigma,
        })
    }

    pub fn node_count(&self) -> usize {
        self.bmne.nrows()
    }

    pub fn sensor_count(&self) -> usize {
        self.bmne.ncols()
    }

    /// `Diag(Γ^{1/2} Lᵀ Σ⁻¹ L Γ^{1/2})`, equal to `diag(R)` for diagonal priors.
    pub fn standardization_diag(&self) -> &DVector<f64> {
        &self.standardization_diag
    }

    /// n×m matrix mapping data to standardized values.
    pub fn standardized_kernel(&self) -> &DMatrix<f64> {
        &self.standardized
    }

    pub fn bmne_kernel(&self) -> &DMatrix<f64> {
        &self.bmne
    }

    pub fn marginal_factor(&self) -> &SpdFactor {
        &self.sigma
    }

    pub fn bmne(&self, y: &DVector<f64>) -> Result<Reconstruction> {
        self.check(y)?;
        Ok(Reconstruction::new(&self.bmne * y, ReconstructionKind::Bmne))
    }

    pub fn standardized(&self, y: &DVector<f64>) -> Result<Reconstruction> {
        self.check(y)?;
        Ok(Reconstruction::new(
            &self.standardized * y,
            ReconstructionKind::Standardized,
        ))
    }

    /// Standardized values without building a [`Reconstruction`].
    pub fn standardized_values(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.standardized * y
    }

    fn check(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.sensor_count() {
            return Err(Error::DimensionMismatch {
                context: "measurement length",
                expected: self.sensor_count(),
                actual: y.len(),
            });
        }
        Ok(())
    }
}

/// `z = T⁻¹ x̂` with `T` from [`generalized_weights`].
pub fn standardized_estimate(
    l: &DMatrix<f64>,
    model: &GaussianModel,
    y: &DVector<f64>,
) -> Result<Reconstruction> {
    check_measurement(l, y)?;
    InverseOperator::new(l, model)?.standardized(y)
}

/// Normalized scalar projection under a precomputed metric factor.
pub fn nsp_with(metric: &SpdFactor, y: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let yy = metric.quad_form(y);
    let vv = metric.quad_form(v);
    if yy == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedProjection);
    }
    let yv = metric.bilinear(y, v);
    Ok((yv / (yy * vv).sqrt()).clamp(-1.0, 1.0))
}

/// `yᵀC⁻¹v / √((yᵀC⁻¹y)(vᵀC⁻¹v))`.
pub fn nsp(y: &DVector<f64>, v: &DVector<f64>, c: &Covariance) -> Result<f64> {
    check_pair(y, v, c)?;
    nsp_with(&c.factor()?, y, v)
}

/// `1 − nsp(y, v, C)`.
pub fn scalar_rejection(y: &DVector<f64>, v: &DVector<f64>, c: &Covariance) -> Result<f64> {
    Ok(1.0 - nsp(y, v, c)?)
}

fn check_pair(y: &DVector<f64>, v: &DVector<f64>, c: &Covariance) -> Result<()> {
    if y.len() != v.len() || y.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection operands",
            expected: c.dim(),
            actual: if y.len() != c.dim() { y.len() } else { v.len() },
        });
    }
    Ok(())
}

/// `ρ(u, v | Σ) = √((u − v)ᵀ Σ⁻¹ (u − v))`.
pub fn mahalanobis(u: &DVector<f64>, v: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    check_spd(sigma, "Mahalanobis metric")?;
    if u.len() != v.len() || u.len() != sigma.nrows() {
        return Err(Error::DimensionMismatch {
            context: "Mahalanobis operands",
            expected: sigma.nrows(),
            actual: u.len(),
        });
    }
    let factor = SpdFactor::new(sigma)?;
    Ok(factor.quad_form(&(u - v)).sqrt())
}

/// Indices of columns parallel (or anti-parallel) to `y` under the metric `C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibleSet {
    pub indices: Vec<usize>,
    pub tolerance: f64,
}

impl FeasibleSet {
    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }
}

/// Columns `i` of `a` with `1 − |nsp(y, a_i | C)| ≤ tol`.
///
/// `a` is either `L` or `L Γ^{1/2}`; parallelism does not depend on column
/// scaling so both give the same set for diagonal priors.
pub fn feasible_set(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Covariance,
    tol: f64,
) -> Result<FeasibleSet> {
    if !(0.0..1.0).contains(&tol) {
        return Err(Error::InvalidArgument(format!(
            "feasible-set tolerance must lie in [0, 1), got {tol}"
        )));
    }
    check_measurement(a, y)?;
    if c.dim() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "noise covariance",
            expected: y.len(),
            actual: c.dim(),
        });
    }
    let metric = c.factor()?;
    feasible_set_with(&metric, a, y, tol)
}

pub(crate) fn feasible_set_with(
    metric: &SpdFactor,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> Result<FeasibleSet> {
    let mut indices = Vec::new();
    for (i, col) in a.column_iter().enumerate() {
        let p = nsp_with(metric, y, &col.into_owned())?;
        if 1.0 - p.abs() <= tol {
            indices.push(i);
        }
    }
    Ok(FeasibleSet {
        indices,
        tolerance: tol,
    })
}
