//! Competing clusterers: feature-distance hierarchical clustering and a
//! Gaussian mixture on per-series AR coefficients, plus the accuracy metric.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_one, FeatureOptions, ScatterFeature, TimeSeries};
use crate::seed;
use crate::special::{log_sum_exp, SpdMatrix};
use crate::yule_walker::yw_coefficients;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(ids: Vec<String>, d: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if d.nrows() != n || d.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: d.nrows() });
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::Domain(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (d[(i, j)], d[(j, i)]);
                if !(a >= 0.0) || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Domain(format!("entry ({i}, {j}) is negative or asymmetric")));
                }
            }
        }
        Ok(DistanceMatrix { ids, d })
    }

    /// Pairwise Euclidean distances between feature vectors.
    pub fn euclidean(ids: Vec<String>, points: &[Vec<f64>]) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(Error::LengthMismatch { left: ids.len(), right: points.len() });
        }
        let n = points.len();
        let rows: Vec<Vec<f64>> =
            (0..n).into_par_iter().map(|i| (0..n).map(|j| euclidean(&points[i], &points[j])).collect()).collect();
        let d = DMatrix::from_fn(n, n, |i, j| if i <= j { rows[i][j] } else { rows[j][i] });
        DistanceMatrix::new(ids, d)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Durbin-Levinson recursion on autocorrelations at lags `1..=p`.
/// Returns the partial autocorrelations and whether any had to be clipped into `[-1, 1]`.
pub fn durbin_levinson(rho: &[f64]) -> (Vec<f64>, bool) {
    let p = rho.len();
    let mut out = Vec::with_capacity(p);
    let mut phi: Vec<f64> = Vec::with_capacity(p);
    let mut clipped = false;
    for k in 0..p {
        let num = rho[k] - (0..k).map(|j| phi[j] * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - (0..k).map(|j| phi[j] * rho[j]).sum::<f64>();
        let mut a = if den > 0.0 { num / den } else { num.signum() };
        if !(a.abs() < 1.0) {
            clipped = true;
            a = a.clamp(-1.0, 1.0);
        }
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - a * prev[k - 1 - j];
        }
        phi.push(a);
        out.push(a);
    }
    (out, clipped)
}

fn feature(series: &TimeSeries, window: usize) -> Result<ScatterFeature> {
    extract_one(series, &FeatureOptions::new(window))
}

pub fn acf_vector(f: &ScatterFeature) -> Vec<f64> {
    f.autocorrelations()
}

pub fn pacf_vector(f: &ScatterFeature) -> Vec<f64> {
    durbin_levinson(&f.autocorrelations()).0
}

/// Partial autocorrelations at lags `1..K`.
pub fn pacf(series: &TimeSeries, window: usize) -> Result<Vec<f64>> {
    Ok(pacf_vector(&feature(series, window)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArEstimator {
    #[default]
    YuleWalker,
    /// Conditional least squares on the centered series.
    ConditionalLeastSquares,
}

/// Per-series AR(K-1) coefficients.
pub fn ar_coefficients(series: &TimeSeries, window: usize, estimator: ArEstimator) -> Result<Vec<f64>> {
    match estimator {
        ArEstimator::YuleWalker => yw_from_feature(&feature(series, window)?),
        ArEstimator::ConditionalLeastSquares => {
            feature(series, window)?;
            let y = crate::features::center(series)?.values;
            let p = window - 1;
            let rows = y.len() - p;
            let x = DMatrix::from_fn(rows, p, |t, j| y[t + p - 1 - j]);
            let target = DVector::from_iterator(rows, y[p..].iter().copied());
            let xtx = SpdMatrix::new(x.transpose() * &x)?;
            Ok(xtx.solve(&(x.transpose() * target)).iter().copied().collect())
        }
    }
}

pub fn yw_from_feature(f: &ScatterFeature) -> Result<Vec<f64>> {
    yw_coefficients(&SpdMatrix::new(f.scatter.clone())?)
}

pub fn d_acf(x: &TimeSeries, y: &TimeSeries, window: usize) -> Result<f64> {
    Ok(euclidean(&acf_vector(&feature(x, window)?), &acf_vector(&feature(y, window)?)))
}

pub fn d_pacf(x: &TimeSeries, y: &TimeSeries, window: usize) -> Result<f64> {
    Ok(euclidean(&pacf(x, window)?, &pacf(y, window)?))
}

pub fn d_pic(x: &TimeSeries, y: &TimeSeries, window: usize) -> Result<f64> {
    let est = ArEstimator::YuleWalker;
    Ok(euclidean(&ar_coefficients(x, window, est)?, &ar_coefficients(y, window, est)?))
}

fn ids(features: &[ScatterFeature]) -> Vec<String> {
    features.iter().map(|f| f.id.clone()).collect()
}

pub fn acf_distances(features: &[ScatterFeature]) -> Result<DistanceMatrix> {
    let pts: Vec<Vec<f64>> = features.iter().map(acf_vector).collect();
    DistanceMatrix::euclidean(ids(features), &pts)
}

pub fn pacf_distances(features: &[ScatterFeature]) -> Result<DistanceMatrix> {
    let pts: Vec<Vec<f64>> = features.iter().map(pacf_vector).collect();
    DistanceMatrix::euclidean(ids(features), &pts)
}

pub fn pic_distances(features: &[ScatterFeature]) -> Result<DistanceMatrix> {
    let pts = features.iter().map(yw_from_feature).collect::<Result<Vec<_>>>()?;
    DistanceMatrix::euclidean(ids(features), &pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    #[default]
    Complete,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Surviving slot (the smaller index).
    pub into: usize,
    pub from: usize,
    pub height: f64,
}

/// Agglomerates until `target` clusters remain. Each cluster is tracked in the slot of its
/// smallest member; among equal distances the pair with the smallest `(i, j)` merges first.
pub fn agglomerate(dist: &DistanceMatrix, target: usize, linkage: Linkage) -> (Vec<usize>, Vec<Merge>) {
    let n = dist.len();
    let mut d = dist.d.clone();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut slot: Vec<usize> = (0..n).collect();
    let mut merges = Vec::new();
    for _ in 0..n.saturating_sub(target.max(1)) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if d[(i, j)] < best.2 {
                    best = (i, j, d[(i, j)]);
                }
            }
        }
        let (i, j, h) = best;
        if i == usize::MAX {
            break;
        }
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let (dki, dkj) = (d[(k, i)], d[(k, j)]);
            let v = match linkage {
                Linkage::Single => dki.min(dkj),
                Linkage::Complete => dki.max(dkj),
                Linkage::Average => (size[i] as f64 * dki + size[j] as f64 * dkj) / (size[i] + size[j]) as f64,
            };
            d[(k, i)] = v;
            d[(i, k)] = v;
        }
        active[j] = false;
        size[i] += size[j];
        for s in slot.iter_mut().filter(|s| **s == j) {
            *s = i;
        }
        merges.push(Merge { into: i, from: j, height: h });
    }
    (relabel(&slot), merges)
}

/// Maps arbitrary labels to `0..` in order of first appearance.
pub fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(p) => p,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect()
}

pub fn hierarchical_cluster(dist: &DistanceMatrix, groups: usize, linkage: Linkage) -> Result<Vec<usize>> {
    if groups == 0 || groups > dist.len() {
        return Err(Error::Config(format!("cannot cut {} points into {groups} clusters", dist.len())));
    }
    Ok(agglomerate(dist, groups, linkage).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// One unrestricted covariance per component.
    #[default]
    Full,
    /// A single covariance shared by all components.
    Tied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub groups: usize,
    pub covariance: CovarianceModel,
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

impl GmmConfig {
    pub fn new(groups: usize) -> Self {
        GmmConfig { groups, covariance: CovarianceModel::Full, max_iter: 500, tol: 1e-8, n_restarts: 10, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub pi: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<SpdMatrix>,
    pub z: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl GmmFit {
    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

struct GmmData {
    x: Vec<DVector<f64>>,
    dim: usize,
    ridge: f64,
}

impl GmmData {
    fn new(coeffs: &[Vec<f64>]) -> Result<Self> {
        let dim = coeffs.first().map(Vec::len).ok_or_else(|| Error::Config("no coefficient vectors".into()))?;
        if dim == 0 {
            return Err(Error::Config("coefficient vectors are empty".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite coefficient".into()));
        }
        let x: Vec<DVector<f64>> = coeffs.iter().map(|c| DVector::from_column_slice(c)).collect();
        let n = x.len() as f64;
        let mean = x.iter().fold(DVector::zeros(dim), |a, b| a + b) / n;
        let total_trace: f64 = x.iter().map(|v| (v - &mean).norm_squared()).sum::<f64>() / n;
        let ridge = 1e-8 * total_trace / dim as f64;
        Ok(GmmData { x, dim, ridge: if ridge > 0.0 { ridge } else { 1e-12 } })
    }

    fn m_step(
        &self,
        z: &DMatrix<f64>,
        model: CovarianceModel,
    ) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<SpdMatrix>)> {
        let n = self.x.len();
        let groups = z.ncols();
        let mut pi = Vec::with_capacity(groups);
        let mut means = Vec::with_capacity(groups);
        let mut raw = Vec::with_capacity(groups);
        for g in 0..groups {
            let w: f64 = z.column(g).sum();
            if !(w > 1e-10 * n as f64) {
                return Err(Error::EmptyCluster { group: g, weight: w });
            }
            let mean = self.x.iter().enumerate().fold(DVector::zeros(self.dim), |a, (i, v)| a + v * z[(i, g)]) / w;
            let mut cov = DMatrix::zeros(self.dim, self.dim);
            for (i, v) in self.x.iter().enumerate() {
                let c = v - &mean;
                cov += &c * c.transpose() * z[(i, g)];
            }
            pi.push(w / n as f64);
            means.push(mean);
            raw.push((cov, w));
        }
        if model == CovarianceModel::Tied {
            let pooled = raw.iter().fold(DMatrix::zeros(self.dim, self.dim), |a, (c, _)| a + c) / n as f64;
            raw.iter_mut().for_each(|(c, w)| (*c, *w) = (pooled.clone(), 1.0));
        }
        let covs = raw
            .into_iter()
            .map(|(mut cov, w)| {
                cov /= w;
                for k in 0..self.dim {
                    cov[(k, k)] += self.ridge;
                }
                SpdMatrix::new((&cov + cov.transpose()) * 0.5)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((pi, means, covs))
    }

    fn e_step(&self, pi: &[f64], means: &[DVector<f64>], covs: &[SpdMatrix]) -> Result<(DMatrix<f64>, f64)> {
        let groups = pi.len();
        let half_log_2pi = 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln();
        let mut z = DMatrix::zeros(self.x.len(), groups);
        let mut ll = 0.0;
        let mut row = vec![0.0; groups];
        for (i, v) in self.x.iter().enumerate() {
            for g in 0..groups {
                let c = v - &means[g];
                let quad = c.dot(&covs[g].solve(&c));
                row[g] = pi[g].ln() - half_log_2pi - 0.5 * covs[g].logdet() - 0.5 * quad;
            }
            let lse = log_sum_exp(&row);
            if !lse.is_finite() {
                return Err(Error::Numerical(format!("row {i} has no finite component density")));
            }
            for g in 0..groups {
                z[(i, g)] = (row[g] - lse).exp();
            }
            ll += lse;
        }
        Ok((z, ll))
    }
}

fn gmm_start(data: &GmmData, config: &GmmConfig, restart: usize) -> Result<GmmFit> {
    let groups = config.groups;
    let mut rng = seed::rng_for(config.seed, &[0x474d_4d, restart as u64]);
    let points: Vec<Vec<f64>> = data.x.iter().map(|v| v.iter().copied().collect()).collect();
    let mut z0 = if restart % 2 == 0 {
        crate::wmm::one_hot(&crate::wmm::kmeans(&points, groups, &mut rng), groups)
    } else {
        DMatrix::from_fn(points.len(), groups, |_, _| Exp1.sample(&mut rng))
    };
    for mut r in z0.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
    let (mut pi, mut means, mut covs) = data.m_step(&z0, config.covariance)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let z = loop {
        let (z, ll) = data.e_step(&pi, &means, &covs)?;
        if let Some(&prev) = trace.last() {
            if ((ll - prev) / f64::abs(prev)).abs() < config.tol {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || trace.len() >= config.max_iter {
            break z;
        }
        (pi, means, covs) = data.m_step(&z, config.covariance)?;
    };
    Ok(GmmFit { labels: crate::wmm::map_labels(&z), pi, means, covs, z, loglik_trace: trace, converged })
}

/// Full-covariance Gaussian mixture, best of `n_restarts` EM runs.
/// Each covariance carries a ridge of `1e-8` times the average per-coordinate variance of the data.
pub fn gmm_fit(coeffs: &[Vec<f64>], config: &GmmConfig) -> Result<GmmFit> {
    if config.groups == 0 || config.groups > coeffs.len() {
        return Err(Error::Config(format!("{} points cannot fill {} components", coeffs.len(), config.groups)));
    }
    if config.n_restarts == 0 || config.max_iter == 0 || !(config.tol > 0.0) {
        return Err(Error::Config("restarts, iterations and tolerance must be positive".into()));
    }
    let data = GmmData::new(coeffs)?;
    let mut best: Option<GmmFit> = None;
    let mut last_err = None;
    for r in 0..config.n_restarts {
        match gmm_start(&data, config, r) {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik() > b.loglik()) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| Error::AllRestartsFailed {
        restarts: config.n_restarts,
        last: Box::new(last_err.unwrap_or_else(|| Error::Numerical("no restart ran".into()))),
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Largest share of matches over relabelings of the estimated clusters.
pub fn clustering_accuracy(est: &[usize], truth: &[usize]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch { left: est.len(), right: truth.len() });
    }
    if est.is_empty() {
        return Err(Error::Config("no labels".into()));
    }
    let (est, truth) = (relabel(est), relabel(truth));
    let size = est.iter().chain(&truth).max().map_or(0, |m| m + 1);
    if size > 8 {
        return Err(Error::Config(format!("accuracy supports at most 8 labels, got {size}")));
    }
    let mut counts = vec![vec![0usize; size]; size];
    for (&e, &t) in est.iter().zip(&truth) {
        counts[e][t] += 1;
    }
    let best = permutations(size)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(e, &t)| counts[e][t]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(best as f64 / est.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn noise(seed: u64, n: usize) -> TimeSeries {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        TimeSeries::new(format!("s{seed}"), (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    fn ar1(seed: u64, n: usize, phi: f64) -> TimeSeries {
        let e = noise(seed, n + 200).values;
        let mut y = vec![0.0; n + 200];
        for t in 1..y.len() {
            y[t] = phi * y[t - 1] + e[t];
        }
        TimeSeries::new(format!("a{seed}"), y[200..].to_vec()).unwrap()
    }

    #[test]
    fn acf_distance_examples() {
        let x = ar1(1, 200, 0.5);
        assert_eq!(d_acf(&x, &x, 3).unwrap(), 0.0);
        assert_abs_diff_eq!(euclidean(&[0.5, 0.25], &[0.3, 0.09]), 0.0656f64.sqrt(), epsilon = 1e-15);
        let y = noise(2, 150);
        assert_eq!(d_acf(&x, &y, 3).unwrap(), d_acf(&y, &x, 3).unwrap());
    }

    #[test]
    fn pacf_examples() {
        let (p, clipped) = durbin_levinson(&[0.5, 0.25, 0.125]);
        assert!(!clipped);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.0, epsilon = 1e-15);
        assert_eq!(durbin_levinson(&[0.0, 0.0]).0, vec![0.0, 0.0]);
        let x = ar1(3, 300, 0.4);
        let f = feature(&x, 4).unwrap();
        assert_eq!(pacf(&x, 4).unwrap()[0], f.autocorrelations()[0]);
        // AR(2) from exact autocorrelations: last partial equals phi2.
        let r1 = 0.5 / 1.1;
        let (p, _) = durbin_levinson(&[r1, 0.5 * r1 - 0.1]);
        assert_abs_diff_eq!(p[1], -0.1, epsilon = 1e-14);
        let (p, clipped) = durbin_levinson(&[1.2]);
        assert!(clipped);
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn pic_examples() {
        let x = ar1(4, 200, 0.5);
        assert_eq!(d_pic(&x, &x, 3).unwrap(), 0.0);
        let a = ScatterFeature::from_autocov("a", 100, vec![1.0, 0.6]);
        let b = ScatterFeature::from_autocov("b", 100, vec![1.0, 0.5]);
        let d = euclidean(&yw_from_feature(&a).unwrap(), &yw_from_feature(&b).unwrap());
        assert_abs_diff_eq!(d, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn least_squares_and_yule_walker_agree_roughly() {
        let x = ar1(5, 2000, 0.6);
        let yw = ar_coefficients(&x, 2, ArEstimator::YuleWalker).unwrap();
        let cls = ar_coefficients(&x, 2, ArEstimator::ConditionalLeastSquares).unwrap();
        assert!((yw[0] - cls[0]).abs() < 0.01);
        assert!((yw[0] - 0.6).abs() < 0.06);
    }

    fn dm(points: &[f64]) -> DistanceMatrix {
        let pts: Vec<Vec<f64>> = points.iter().map(|&p| vec![p]).collect();
        DistanceMatrix::euclidean((0..points.len()).map(|i| i.to_string()).collect(), &pts).unwrap()
    }

    #[test]
    fn hierarchical_examples() {
        let blobs = dm(&[0.0, 0.01, 0.005, 10.0, 10.01, 10.005]);
        assert_eq!(hierarchical_cluster(&blobs, 2, Linkage::Complete).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(hierarchical_cluster(&blobs, 6, Linkage::Complete).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(hierarchical_cluster(&blobs, 0, Linkage::Complete).is_err());

        // Points 0, 2, 3, 5: merge {1,2} at 1, then {0} joins at 3 (tie with {3} broken by index),
        // then {3} joins at 5.
        let (_, merges) = agglomerate(&dm(&[0.0, 2.0, 3.0, 5.0]), 1, Linkage::Complete);
        let m: Vec<(usize, usize, f64)> = merges.iter().map(|m| (m.into, m.from, m.height)).collect();
        assert_eq!(m, vec![(1, 2, 1.0), (0, 1, 3.0), (0, 3, 5.0)]);
        let (_, merges) = agglomerate(&dm(&[0.0, 2.0, 3.0, 5.0]), 1, Linkage::Average);
        let h: Vec<f64> = merges.iter().map(|m| m.height).collect();
        assert_eq!(h, vec![1.0, 2.5, 10.0 / 3.0]);
    }

    #[test]
    fn gmm_single_component_is_closed_form() {
        let pts = vec![vec![0.1, 0.3], vec![0.5, -0.2], vec![-0.4, 0.0], vec![0.2, 0.9]];
        let fit = gmm_fit(&pts, &GmmConfig::new(1)).unwrap();
        assert_abs_diff_eq!(fit.means[0][0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.means[0][1], 0.25, epsilon = 1e-12);
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let var0 = xs.iter().map(|x| (x - 0.1) * (x - 0.1)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(fit.covs[0].matrix()[(0, 0)], var0, epsilon = 1e-8);
        assert_eq!(fit.pi, vec![1.0]);
    }

    #[test]
    fn gmm_point_masses_split_perfectly() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { 0.9 } else { -0.9 }]).collect();
        let truth: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let fit = gmm_fit(&pts, &GmmConfig::new(2)).unwrap();
        assert_eq!(clustering_accuracy(&fit.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn gmm_loglik_is_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for rep in 0..20 {
            let pts: Vec<Vec<f64>> = (0..60)
                .map(|i| {
                    let c = if i % 3 == 0 { 1.0 } else { -0.5 };
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    vec![c + 0.4 * a, 0.3 * b - c]
                })
                .collect();
            let data = GmmData::new(&pts).unwrap();
            let cfg = GmmConfig { seed: rep, ..GmmConfig::new(2) };
            let Ok(fit) = gmm_start(&data, &cfg, 1) else { continue };
            for w in fit.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", w);
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(clustering_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn random_labels_beat_chance_floor() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let truth: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let mean: f64 = (0..500)
            .map(|_| {
                let est: Vec<usize> = (0..60).map(|_| rng.random_range(0..3)).collect();
                clustering_accuracy(&est, &truth).unwrap()
            })
            .sum::<f64>()
            / 500.0;
        assert!(mean >= 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn distances_are_pseudometrics(a in 0u64..1000, b in 0u64..1000, c in 0u64..1000, scale in 0.1f64..10.0) {
            let (x, y, z) = (noise(a, 80), noise(b + 1000, 90), noise(c + 2000, 70));
            for d in [d_acf, d_pacf, d_pic] {
                let (xy, yz, xz) = (d(&x, &y, 3).unwrap(), d(&y, &z, 3).unwrap(), d(&x, &z, 3).unwrap());
                prop_assert!(xy >= 0.0);
                prop_assert!((xy - d(&y, &x, 3).unwrap()).abs() < 1e-15);
                prop_assert!(xz <= xy + yz + 1e-12);
            }
            let xs = x.scaled(-scale);
            prop_assert!((d_acf(&x, &y, 3).unwrap() - d_acf(&xs, &y, 3).unwrap()).abs() < 1e-10);
            prop_assert!((d_pacf(&x, &y, 3).unwrap() - d_pacf(&xs, &y, 3).unwrap()).abs() < 1e-10);
        }
    }
}
