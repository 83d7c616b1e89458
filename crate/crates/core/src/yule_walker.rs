//! Group autoregressive models from fitted Wishart scale matrices.
//!
//! Any matrix proportional to a group's autocovariance matrix yields its
//! Yule-Walker coefficients, so `Sigma_g` is used directly after splitting it
//! into the leading scalar `q`, the lag vector `u` and the trailing block `Q`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::ScatterFeature;
use crate::special::SpdMatrix;
use crate::wmm::WmmFit;

/// Characteristic roots closer to the unit circle than this are reported as non-stationary.
pub const STATIONARITY_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub q: f64,
    pub u: DVector<f64>,
    pub trailing: SpdMatrix,
}

pub fn block_partition(sigma: &SpdMatrix) -> Result<BlockPartition> {
    let k = sigma.dim();
    if k < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: k });
    }
    let m = sigma.matrix();
    let q = m[(0, 0)];
    let u = m.view((1, 0), (k - 1, 1)).column(0).into_owned();
    let trailing = SpdMatrix::new(m.view((1, 1), (k - 1, k - 1)).into_owned())?;
    Ok(BlockPartition { q, u, trailing })
}

/// Leading `size x size` principal block, used for lower-order fits.
pub fn leading_block(sigma: &SpdMatrix, size: usize) -> Result<SpdMatrix> {
    if size == 0 || size > sigma.dim() {
        return Err(Error::DimensionMismatch { expected: sigma.dim(), got: size });
    }
    SpdMatrix::new(sigma.matrix().view((0, 0), (size, size)).into_owned())
}

/// `Q^-1 u`.
pub fn yw_coefficients(sigma: &SpdMatrix) -> Result<Vec<f64>> {
    let b = block_partition(sigma)?;
    Ok(b.trailing.solve(&b.u).iter().copied().collect())
}

/// `1 - u' Q^-1 u / q`: the share of variance left unexplained by the group's AR fit.
pub fn innovation_ratio(sigma: &SpdMatrix) -> Result<f64> {
    let b = block_partition(sigma)?;
    let explained = b.u.dot(&b.trailing.solve(&b.u));
    let ratio = 1.0 - explained / b.q;
    if !(ratio > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("Schur complement ratio {ratio:e}")));
    }
    Ok(ratio)
}

/// `gamma0 * (1 - u' Q^-1 u / q)`.
pub fn yw_innovation_variance(gamma0: f64, sigma: &SpdMatrix) -> Result<f64> {
    if !(gamma0 > 0.0) {
        return Err(Error::Domain(format!("gamma0 must be positive, got {gamma0}")));
    }
    Ok(gamma0 * innovation_ratio(sigma)?)
}

/// Robust covariance of the pooled Yule-Walker coefficients,
/// `A^-1 B A^-1` with `A = sum z_i X_i'X_i` and `B = sum z_i^2 sigma2_i X_i'X_i`,
/// where `X_i'X_i` is the leading `(K-1)` block of `S_i`.
pub fn sandwich_covariance(features: &[ScatterFeature], z_col: &[f64], sigma2: &[f64]) -> Result<DMatrix<f64>> {
    if z_col.len() != features.len() {
        return Err(Error::LengthMismatch { left: z_col.len(), right: features.len() });
    }
    if sigma2.len() != features.len() {
        return Err(Error::LengthMismatch { left: sigma2.len(), right: features.len() });
    }
    let k = features.first().map(ScatterFeature::window).ok_or_else(|| Error::Config("no individuals".into()))?;
    if k < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: k });
    }
    let p = k - 1;
    let mut a = DMatrix::zeros(p, p);
    let mut b = DMatrix::zeros(p, p);
    for ((f, &z), &s2) in features.iter().zip(z_col).zip(sigma2) {
        if f.window() != k {
            return Err(Error::DimensionMismatch { expected: k, got: f.window() });
        }
        if z == 0.0 {
            continue;
        }
        let x = f.leading_block(p);
        a += &x * z;
        b += &x * (z * z * s2);
    }
    let a = SpdMatrix::new(a)?;
    let left = a.solve_matrix(&b);
    let cov = a.solve_matrix(&left.transpose());
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Moduli of the roots of `1 - phi_1 z - ... - phi_p z^p`; infinite when the polynomial is constant.
pub fn ar_root_moduli(phi: &[f64]) -> Vec<f64> {
    let p = phi.len();
    if p == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::zeros(p, p);
    for (j, &c) in phi.iter().enumerate() {
        companion[(0, j)] = c;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().map(|e| 1.0 / e.norm()).collect()
}

pub fn is_stationary(phi: &[f64]) -> bool {
    ar_root_moduli(phi).iter().all(|&m| m > 1.0 + STATIONARITY_MARGIN)
}

#[derive(Debug, Clone)]
pub struct GroupArModel {
    /// 0-based group index.
    pub group: usize,
    pub phi: Vec<f64>,
    pub coef_cov: DMatrix<f64>,
    /// `(id, sigma^2)` for MAP members, in panel order.
    pub sigma2_by_individual: Vec<(String, f64)>,
    /// Innovation variance implied by the scale matrix itself, `q - u' Q^-1 u`.
    pub kappa: f64,
    pub stationary: bool,
    pub min_root_modulus: f64,
}

impl GroupArModel {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.coef_cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ArMixtureModel {
    pub groups: Vec<GroupArModel>,
    pub ids: Vec<String>,
    /// MAP group per individual (0-based).
    pub labels: Vec<usize>,
    pub responsibilities: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovWeights {
    /// Continuous responsibilities.
    #[default]
    Soft,
    /// MAP indicators.
    Hard,
}

pub fn assemble_armm(fit: &WmmFit, features: &[ScatterFeature]) -> Result<ArMixtureModel> {
    assemble_armm_with(fit, features, CovWeights::Soft)
}

pub fn assemble_armm_with(fit: &WmmFit, features: &[ScatterFeature], weights: CovWeights) -> Result<ArMixtureModel> {
    if fit.z.nrows() != features.len() {
        return Err(Error::LengthMismatch { left: fit.z.nrows(), right: features.len() });
    }
    let mut groups = Vec::with_capacity(fit.groups());
    for (g, sigma) in fit.sigma.iter().enumerate() {
        let phi = yw_coefficients(sigma)?;
        let ratio = innovation_ratio(sigma)?;
        let sigma2_at_g: Vec<f64> = features.iter().map(|f| f.gamma0() * ratio).collect();
        let z_col: Vec<f64> = match weights {
            CovWeights::Soft => fit.z_column(g),
            CovWeights::Hard => fit.labels.iter().map(|&l| if l == g { 1.0 } else { 0.0 }).collect(),
        };
        let coef_cov = if z_col.iter().any(|&z| z > 0.0) {
            sandwich_covariance(features, &z_col, &sigma2_at_g)?
        } else {
            DMatrix::from_element(phi.len(), phi.len(), f64::NAN)
        };
        let sigma2_by_individual = features
            .iter()
            .zip(&fit.labels)
            .zip(&sigma2_at_g)
            .filter(|((_, &l), _)| l == g)
            .map(|((f, _), &s2)| (f.id.clone(), s2))
            .collect();
        let moduli = ar_root_moduli(&phi);
        let min_root_modulus = moduli.iter().copied().fold(f64::INFINITY, f64::min);
        groups.push(GroupArModel {
            group: g,
            kappa: sigma.matrix()[(0, 0)] * ratio,
            stationary: min_root_modulus > 1.0 + STATIONARITY_MARGIN,
            min_root_modulus,
            phi,
            coef_cov,
            sigma2_by_individual,
        });
    }
    Ok(ArMixtureModel {
        groups,
        ids: features.iter().map(|f| f.id.clone()).collect(),
        labels: fit.labels.clone(),
        responsibilities: fit.z.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn spd(rows: usize, v: &[f64]) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_row_slice(rows, rows, v)).unwrap()
    }

    fn toeplitz(rho: &[f64]) -> SpdMatrix {
        let k = rho.len();
        SpdMatrix::new(DMatrix::from_fn(k, k, |r, c| rho[r.abs_diff(c)])).unwrap()
    }

    /// Forward Yule-Walker recursion for AR(2): rho1 = phi1 / (1 - phi2), rho2 = phi1 rho1 + phi2.
    fn ar2_rho(phi1: f64, phi2: f64) -> [f64; 3] {
        let r1 = phi1 / (1.0 - phi2);
        [1.0, r1, phi1 * r1 + phi2]
    }

    #[test]
    fn partition_examples() {
        let b = block_partition(&spd(2, &[4.0, -3.0, -3.0, 4.0])).unwrap();
        assert_eq!(b.q, 4.0);
        assert_eq!(b.u.as_slice(), &[-3.0]);
        assert_eq!(b.trailing.matrix(), &DMatrix::from_element(1, 1, 4.0));

        let b = block_partition(&SpdMatrix::new(DMatrix::identity(3, 3)).unwrap()).unwrap();
        assert_eq!(b.q, 1.0);
        assert_eq!(b.u.as_slice(), &[0.0, 0.0]);
        assert_eq!(b.trailing.matrix(), &DMatrix::identity(2, 2));

        let rho = ar2_rho(0.5, -0.1);
        let b = block_partition(&toeplitz(&rho)).unwrap();
        assert_eq!(b.u.as_slice(), &[rho[1], rho[2]]);
        assert_eq!(b.trailing.matrix(), toeplitz(&rho[..2]).matrix());

        assert!(block_partition(&spd(1, &[2.0])).is_err());
    }

    #[test]
    fn coefficient_examples() {
        assert_abs_diff_eq!(yw_coefficients(&spd(2, &[1.0, 0.5, 0.5, 1.0])).unwrap()[0], 0.5, epsilon = 1e-15);
        let phi = yw_coefficients(&toeplitz(&ar2_rho(0.5, -0.1))).unwrap();
        assert_abs_diff_eq!(phi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(phi[1], -0.1, epsilon = 1e-12);
        // 5-digit rounded autocorrelations still land within 1e-4.
        let phi = yw_coefficients(&toeplitz(&[1.0, 0.45455, 0.12727])).unwrap();
        assert_abs_diff_eq!(phi[0], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(phi[1], -0.1, epsilon = 1e-4);
        let phi = yw_coefficients(&spd(3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(phi, vec![0.0, 0.0]);
    }

    #[test]
    fn innovation_variance_examples() {
        assert_abs_diff_eq!(
            yw_innovation_variance(1.0, &spd(2, &[1.0, 0.5, 0.5, 1.0])).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        let diag = spd(3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(yw_innovation_variance(4.2, &diag).unwrap(), 4.2);
        assert!(yw_innovation_variance(0.0, &diag).is_err());
    }

    #[test]
    fn innovation_variance_positive_on_random_toeplitz() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 1000 {
            let k = rng.random_range(2..7);
            let mut gamma: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            gamma[0] = rng.random_range(0.5..3.0) + gamma[1..].iter().map(|g| g.abs()).sum::<f64>();
            let Ok(sigma) = SpdMatrix::new(DMatrix::from_fn(k, k, |r, c| gamma[r.abs_diff(c)])) else {
                continue;
            };
            assert!(yw_innovation_variance(rng.random_range(0.1..5.0), &sigma).unwrap() > 0.0);
            checked += 1;
        }
    }

    fn feature(id: &str, n: usize, gamma: &[f64]) -> ScatterFeature {
        ScatterFeature::from_autocov(id, n, gamma.to_vec())
    }

    #[test]
    fn sandwich_reductions() {
        let a = feature("a", 120, &[1.5, 0.6, 0.2]);
        let b = feature("b", 80, &[0.7, -0.1, 0.05]);
        let s2 = 0.9;
        let single = sandwich_covariance(std::slice::from_ref(&a), &[1.0], &[s2]).unwrap();
        let expected = a.leading_block(2).try_inverse().unwrap() * s2;
        assert!((&single - &expected).amax() < 1e-14);

        let twice = sandwich_covariance(&[a.clone(), a.clone()], &[1.0, 1.0], &[s2, s2]).unwrap();
        assert!((&twice * 2.0 - &single).amax() < 1e-14);

        let masked = sandwich_covariance(&[a.clone(), b.clone()], &[1.0, 0.0], &[s2, 3.0]).unwrap();
        assert!((&masked - &single).amax() < 1e-15);

        let hard = sandwich_covariance(&[a.clone(), b.clone()], &[1.0, 1.0], &[s2, s2]).unwrap();
        let pooled = (a.leading_block(2) + b.leading_block(2)).try_inverse().unwrap() * s2;
        assert!((&hard - &pooled).amax() < 1e-14);
    }

    #[test]
    fn stationarity_check() {
        assert!(is_stationary(&[0.5, -0.1]));
        assert!(is_stationary(&[]));
        assert!(!is_stationary(&[1.0]));
        assert!(!is_stationary(&[0.5, 0.6]));
        let m = ar_root_moduli(&[0.5]);
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn coefficients_are_scale_invariant(
            phi1 in -0.9f64..0.9, phi2 in -0.5f64..0.4, c in 1e-3f64..1e3,
        ) {
            prop_assume!(phi1.abs() < 1.0 - phi2);
            let base = toeplitz(&ar2_rho(phi1, phi2));
            let scaled = SpdMatrix::new(base.matrix() * c).unwrap();
            let a = yw_coefficients(&base).unwrap();
            let b = yw_coefficients(&scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!(is_stationary(&a));
        }
    }
}
