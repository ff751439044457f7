//! Dense linear-algebra helpers: symmetric square roots, spectral extremes,
//! SPD factorizations with conditioning checks, and structured covariances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`matrix_sqrt_psd`].
pub const SQRT_SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues down to `-SQRT_CLAMP_TOL` are clamped to zero before taking roots.
pub const SQRT_CLAMP_TOL: f64 = 1e-12;
/// Symmetry tolerance for covariance matrices.
pub const COVARIANCE_SYMMETRY_TOL: f64 = 1e-12;
/// Largest condition number tolerated for the m×m systems that get solved.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F` (zero for the zero matrix).
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

/// Largest absolute entry of `M − Mᵀ`.
fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn require_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix after exact symmetrization.
fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    require_square(m, "eigen_extremes")?;
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument("empty matrix has no spectrum".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > SQRT_SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym / scale });
    }
    let eig = symmetric_eigen(m);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    Ok((min, max))
}

/// Symmetric positive semidefinite square root `S` with `S·S = Σ`.
///
/// Computed from the symmetric eigen-decomposition; eigenvalues in
/// `[-1e-12·scale, 0)` are treated as round-off and clamped to zero.
pub fn matrix_sqrt_psd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vectors, values) = psd_spectrum(sigma)?;
    Ok(spectral_function(&vectors, &values, f64::sqrt))
}

/// Inverse symmetric square root `Σ^{-1/2}` of an SPD matrix.
pub fn matrix_inv_sqrt_spd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vectors, values) = psd_spectrum(sigma)?;
    let min = values.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(spectral_function(&vectors, &values, |v| 1.0 / v.sqrt()))
}

/// Both `Σ^{1/2}` and `Σ^{-1/2}` from one decomposition.
pub fn matrix_sqrt_pair_spd(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vectors, values) = psd_spectrum(sigma)?;
    let min = values.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok((
        spectral_function(&vectors, &values, f64::sqrt),
        spectral_function(&vectors, &values, |v| 1.0 / v.sqrt()),
    ))
}

fn psd_spectrum(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    require_square(sigma, "matrix square root")?;
    let scale = sigma.amax().max(1.0);
    let asym = max_asymmetry(sigma);
    if asym > SQRT_SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym / scale });
    }
    let eig = symmetric_eigen(sigma);
    let mut values = eig.eigenvalues;
    let floor = -SQRT_CLAMP_TOL * scale;
    for v in values.iter_mut() {
        if *v < floor {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((eig.eigenvectors, values))
}

fn spectral_function(
    vectors: &DMatrix<f64>,
    values: &DVector<f64>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(values[j]);
    }
    let mut out = scaled * vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Validates symmetry (relative 1e-12) and strict positive definiteness.
pub fn check_spd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    require_square(m, context)?;
    let asym = relative_asymmetry(m);
    if asym > COVARIANCE_SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = symmetric_eigen(m);
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Cholesky factor of an SPD matrix together with its spectral condition number.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdFactor {
    /// Factorizes `m`, rejecting it when the condition number exceeds [`CONDITION_LIMIT`].
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        require_square(m, "SPD factorization")?;
        let mut sym = m.clone();
        symmetrize(&mut sym);
        let eig = SymmetricEigen::new(sym.clone());
        let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let condition = max / min;
        if condition > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                condition,
                limit: CONDITION_LIMIT,
            });
        }
        let chol = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite { min_eigenvalue: min })?;
        Ok(SpdFactor { chol, condition })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `uᵀ M⁻¹ v`.
    pub fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.chol.solve(v))
    }

    /// `vᵀ M⁻¹ v`, evaluated as `‖L⁻¹v‖²` so the result is never negative.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let w = self.chol.l().solve_lower_triangular(v).expect("nonsingular Cholesky factor");
        w.norm_squared()
    }
}

/// A covariance matrix stored with its structure.
///
/// Scaled identities and diagonal matrices are common in this domain and
/// their square roots, inverses and products are cheap; `Dense` covers the
/// general symmetric positive definite case.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    /// `scale · I` of the given dimension.
    Scaled { dim: usize, scale: f64 },
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn identity(dim: usize) -> Self {
        Covariance::Scaled { dim, scale: 1.0 }
    }

    pub fn scaled(dim: usize, scale: f64) -> Self {
        Covariance::Scaled { dim, scale }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Scaled { dim, .. } => *dim,
            Covariance::Diagonal(d) => d.len(),
            Covariance::Dense(m) => m.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self, Covariance::Dense(_))
    }

    /// Returns the scalar `s` when the covariance is exactly `s·I`.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Covariance::Scaled { scale, .. } => Some(*scale),
            Covariance::Diagonal(d) => {
                let first = *d.get(0)?;
                d.iter().all(|&v| v == first).then_some(first)
            }
            Covariance::Dense(m) => {
                let first = m[(0, 0)];
                let n = m.nrows();
                for j in 0..n {
                    for i in 0..n {
                        let expected = if i == j { first } else { 0.0 };
                        if m[(i, j)] != expected {
                            return None;
                        }
                    }
                }
                Some(first)
            }
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Covariance::Scaled { dim, scale } => DVector::from_element(*dim, *scale),
            Covariance::Diagonal(d) => d.clone(),
            Covariance::Dense(m) => m.diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Scaled { dim, scale } => DMatrix::identity(*dim, *dim) * *scale,
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
            Covariance::Dense(m) => m.clone(),
        }
    }

    /// Symmetry (1e-12 relative) and strict positivity.
    pub fn validate(&self) -> Result<()> {
        match self {
            Covariance::Scaled { dim, scale } => {
                if *dim == 0 {
                    return Err(Error::InvalidArgument("covariance of dimension 0".into()));
                }
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::NotPositiveDefinite { min_eigenvalue: *scale });
                }
                Ok(())
            }
            Covariance::Diagonal(d) => {
                if d.is_empty() {
                    return Err(Error::InvalidArgument("covariance of dimension 0".into()));
                }
                let min = d.min();
                if !(min > 0.0) || d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
                }
                Ok(())
            }
            Covariance::Dense(m) => check_spd(m, "covariance"),
        }
    }

    /// `Σ^{1/2}` with the same structure.
    pub fn sqrt(&self) -> Result<Covariance> {
        Ok(match self {
            Covariance::Scaled { dim, scale } => Covariance::Scaled {
                dim: *dim,
                scale: scale.sqrt(),
            },
            Covariance::Diagonal(d) => Covariance::Diagonal(d.map(f64::sqrt)),
            Covariance::Dense(m) => Covariance::Dense(matrix_sqrt_psd(m)?),
        })
    }

    /// `M · Σ` for an arbitrary left factor with `dim` columns.
    pub fn right_multiply(&self, left: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Covariance::Scaled { scale, .. } => left * *scale,
            Covariance::Diagonal(d) => {
                let mut out = left.clone();
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                out
            }
            Covariance::Dense(m) => left * m,
        }
    }

    /// `Σ · v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Scaled { scale, .. } => v * *scale,
            Covariance::Diagonal(d) => v.component_mul(d),
            Covariance::Dense(m) => m * v,
        }
    }

    /// `A + Σ` for a dense square `A` of matching size.
    pub fn add_to(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = a.clone();
        match self {
            Covariance::Scaled { scale, .. } => {
                for i in 0..out.nrows() {
                    out[(i, i)] += scale;
                }
            }
            Covariance::Diagonal(d) => {
                for i in 0..out.nrows() {
                    out[(i, i)] += d[i];
                }
            }
            Covariance::Dense(m) => out += m,
        }
        out
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_extremes(&self) -> Result<(f64, f64)> {
        match self {
            Covariance::Scaled { scale, .. } => Ok((*scale, *scale)),
            Covariance::Diagonal(d) => Ok((d.min(), d.max())),
            Covariance::Dense(m) => eigen_extremes(m),
        }
    }

    /// Factorization of the covariance itself (used for Mahalanobis-type metrics).
    pub fn factor(&self) -> Result<SpdFactor> {
        SpdFactor::new(&self.to_dense())
    }
}
