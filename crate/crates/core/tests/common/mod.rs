#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stdloc::inverse::GaussianModel;
use stdloc::linalg::Covariance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `B Bᵀ / n + shift·I`, eigenvalues bounded below by `shift`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let b = gaussian_matrix(rng, n, n);
    (&b * b.transpose()) / n as f64 + DMatrix::identity(n, n) * shift
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Inverse through LU, independent of the Cholesky path used by the library.
pub fn lu_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible test matrix")
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre over the given panel edges.
pub fn integrate(f: impl Fn(f64) -> f64, edges: &[f64], rule: &[(f64, f64)]) -> f64 {
    edges
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            rule.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>() * half
        })
        .sum()
}

/// Panel edges: geometric towards zero (where `t^{a−1}` is not smooth),
/// then uniform of width at most 0.5.
fn panels(upper: f64) -> Vec<f64> {
    let start = upper.min(1.0);
    let mut edges: Vec<f64> = (0..=60).rev().map(|k| start * 0.5f64.powi(k)).collect();
    let rest = ((upper - start) / 0.5).ceil() as usize;
    for i in 1..=rest {
        edges.push(start + (upper - start) * i as f64 / rest as f64);
    }
    edges
}

/// `∫₀ˣ t^{a−1} e^{−t} dt`; the integral below the first edge uses
/// `e^{−t} ≈ 1`, whose error is `O(ε^{a+1})`.
pub fn lower_integral(a: f64, x: f64, rule: &[(f64, f64)]) -> f64 {
    let edges = panels(x);
    let head = edges[0].powf(a) / a;
    head + integrate(|t| t.powf(a - 1.0) * (-t).exp(), &edges, rule)
}

pub fn quadrature_p(a: f64, x: f64, rule: &[(f64, f64)]) -> f64 {
    let cutoff = a + 60.0 + 12.0 * a.sqrt();
    lower_integral(a, x.min(cutoff), rule) / lower_integral(a, cutoff, rule)
}

/// Three-column problem `L = [L₁, a L₁, b L₁ + L⊥]` with `L⊥` orthogonal to
/// `L₁` in the `C⁻¹` inner product.
pub struct ThreeSource {
    pub l: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    /// `L⊥ᵀ C⁻¹ L⊥`
    pub w: f64,
}

impl ThreeSource {
    pub fn draw(seed: u64) -> Self {
        let mut r = rng(seed);
        let m = 5;
        let c = random_spd(&mut r, m, 0.2);
        let c_inv = lu_inverse(&c);
        let l1 = gaussian_vector(&mut r, m);
        let raw = gaussian_vector(&mut r, m);
        let proj = (l1.transpose() * &c_inv * &raw)[0] / (l1.transpose() * &c_inv * &l1)[0];
        let perp = &raw - &l1 * proj;
        let (a, b) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let l = DMatrix::from_columns(&[l1.clone(), &l1 * a, &l1 * b + &perp]);
        let w = (perp.transpose() * &c_inv * &perp)[0];
        ThreeSource {
            l,
            c,
            a,
            b,
            p1: r.gen_range(0.1..3.0),
            p2: r.gen_range(0.1..3.0),
            q: r.gen_range(0.1..3.0),
            w,
        }
    }

    pub fn with_prior(mut self, p1: f64, p2: f64, q: f64) -> Self {
        (self.p1, self.p2, self.q) = (p1, p2, q);
        self
    }

    pub fn model(&self) -> GaussianModel {
        GaussianModel::new(
            Covariance::Diagonal(DVector::from_vec(vec![self.p1, self.p2, self.q])),
            Covariance::Dense(self.c.clone()),
        )
        .unwrap()
    }

    pub fn y(&self) -> DVector<f64> {
        self.l.column(0).into_owned()
    }

    pub fn closed_form(&self) -> DVector<f64> {
        let gamma = DMatrix::from_diagonal(&DVector::from_vec(vec![self.p1, self.p2, self.q]));
        let sigma = &self.l * gamma * self.l.transpose() + &self.c;
        let y = self.y();
        let s = (y.transpose() * lu_inverse(&sigma) * &y)[0];
        DVector::from_vec(vec![
            self.p1 * s,
            self.a * self.p2 * s,
            self.b / (1.0 / self.q + self.w) * s,
        ])
    }

    pub fn third_competitor(&self) -> f64 {
        self.b.abs() / (1.0 / self.q + self.w)
    }
}
