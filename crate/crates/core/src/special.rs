//! Special functions and the Wishart log density.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetric positive definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * matrix.norm() {
            return Err(Error::NotPositiveDefinite(format!("asymmetric by {asym:e}")));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        if chol.l_dirty().diagonal().iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite("non-positive pivot".into()));
        }
        Ok(SpdMatrix { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        (&inv + inv.transpose()) * 0.5
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `trace(M^-1 * other)`.
    pub fn trace_solve(&self, other: &DMatrix<f64>) -> f64 {
        self.chol.solve(other).trace()
    }
}

pub fn logdet_spd(m: &SpdMatrix) -> f64 {
    m.logdet()
}

/// Digamma function for `x > 0`: upward recurrence to `x >= 6`, then the asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_positive(x))
}

pub(crate) fn digamma_positive(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k) for k = 1..7, evaluated in inv2.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log of the multivariate gamma function `Gamma_K(a)`.
pub fn log_multigamma(dim: usize, a: f64) -> Result<f64> {
    let half_km1 = (dim as f64 - 1.0) / 2.0;
    if dim == 0 || !(a > half_km1) {
        return Err(Error::Domain(format!("log_multigamma requires a > (K-1)/2, got K={dim}, a={a}")));
    }
    let k = dim as f64;
    let mut s = k * (k - 1.0) / 4.0 * PI.ln();
    for j in 0..dim {
        s += ln_gamma(a - j as f64 / 2.0);
    }
    Ok(s)
}

/// `log h(S | Sigma, nu) = (nu/2) log|S Sigma^-1 / 2| - trace(Sigma^-1 S)/2` from precomputed pieces.
#[inline]
pub fn log_kernel_parts(nu: f64, dim: usize, logdet_s: f64, logdet_sigma: f64, trace_solve: f64) -> f64 {
    0.5 * nu * (logdet_s - logdet_sigma - dim as f64 * LN_2) - 0.5 * trace_solve
}

/// `log c(S | nu)`, the part of the Wishart log density that does not involve the scale matrix.
pub fn log_normalizer(dim: usize, nu: f64, logdet_s: f64) -> Result<f64> {
    Ok(-0.5 * (dim as f64 + 1.0) * logdet_s - log_multigamma(dim, nu / 2.0)?)
}

fn check_wishart_args(s: &SpdMatrix, sigma: &SpdMatrix, nu: f64) -> Result<()> {
    if s.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: sigma.dim(), got: s.dim() });
    }
    if !(nu > s.dim() as f64 - 1.0) {
        return Err(Error::Domain(format!("degrees of freedom {nu} must exceed K-1 = {}", s.dim() - 1)));
    }
    Ok(())
}

pub fn wishart_log_kernel(s: &SpdMatrix, sigma: &SpdMatrix, nu: f64) -> Result<f64> {
    check_wishart_args(s, sigma, nu)?;
    Ok(log_kernel_parts(nu, s.dim(), s.logdet(), sigma.logdet(), sigma.trace_solve(s.matrix())))
}

/// Wishart log density `log c(S | nu) + log h(S | Sigma, nu)`; `nu` need not be an integer.
pub fn wishart_log_density(s: &SpdMatrix, sigma: &SpdMatrix, nu: f64) -> Result<f64> {
    let kernel = wishart_log_kernel(s, sigma, nu)?;
    Ok(log_normalizer(s.dim(), nu, s.logdet())? + kernel)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
