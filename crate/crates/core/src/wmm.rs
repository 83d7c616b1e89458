//! Wishart mixture model fitted by EM.
//!
//! Each individual's scatter matrix `S_i` is modelled as Wishart with `n_i`
//! degrees of freedom (or `lambda_g * n_i` for [`Variant::Em2`]) and a
//! group-specific scale matrix `Sigma_g`. Responsibilities are computed in
//! log space; the `Sigma`-free normalizer `c(S_i | n_i)` only enters the
//! responsibilities when the groups use different degrees of freedom.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScatterFeature;
use crate::seed;
use crate::special::{digamma_positive, log_kernel_parts, log_multigamma, log_normalizer, log_sum_exp, SpdMatrix};

/// Clearance above `(K - 1) / min(n_i)` that keeps digamma arguments positive.
pub const LAMBDA_LOWER_MARGIN: f64 = 1e-6;
/// A group whose total responsibility falls below `EMPTY_CLUSTER_FRACTION * I` is treated as empty.
pub const EMPTY_CLUSTER_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Degrees of freedom fixed at `n_i`.
    Em1,
    /// Degrees of freedom `lambda_g * n_i` with `lambda_g` estimated per group.
    Em2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Symmetric Dirichlet(1) responsibilities per individual.
    RandomResponsibility,
    /// k-means on the lag-1..K-1 autocorrelations, hard assignments.
    KmeansCorrelations,
    /// Hard assignments supplied by the caller (0-based). Runs a single start.
    ProvidedLabels(Vec<usize>),
    /// Responsibility rows supplied by the caller, for example from a previous fit. Runs a single start.
    ProvidedResponsibilities(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmmConfig {
    pub groups: usize,
    pub window: usize,
    pub variant: Variant,
    pub max_iter: usize,
    pub tol: f64,
    pub lambda_upper: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub init: Init,
}

impl WmmConfig {
    pub fn new(groups: usize, window: usize) -> Self {
        WmmConfig {
            groups,
            window,
            variant: Variant::Em1,
            max_iter: 500,
            tol: 1e-8,
            lambda_upper: 1.0,
            n_restarts: 10,
            seed: 0,
            init: Init::RandomResponsibility,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.n_restarts = n;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone)]
pub struct WmmFit {
    pub variant: Variant,
    pub pi: Vec<f64>,
    pub sigma: Vec<SpdMatrix>,
    /// `I x G` responsibilities.
    pub z: DMatrix<f64>,
    /// All ones for [`Variant::Em1`].
    pub lambda: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    /// MAP group per individual (0-based).
    pub labels: Vec<usize>,
    pub converged: bool,
    pub iters: usize,
    /// Index of the restart that produced this fit.
    pub restart: usize,
    pub failed_restarts: usize,
}

impl WmmFit {
    pub fn groups(&self) -> usize {
        self.pi.len()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn z_column(&self, g: usize) -> Vec<f64> {
        self.z.column(g).iter().copied().collect()
    }
}

/// State visible to an observer after every E-step: the parameters used by
/// that E-step and the responsibilities it produced.
pub struct EmIteration<'a> {
    pub iter: usize,
    pub z: &'a DMatrix<f64>,
    pub pi: &'a [f64],
    pub sigma: &'a [SpdMatrix],
    pub lambda: &'a [f64],
    pub loglik: f64,
}

/// Per-individual quantities that do not change during EM.
struct Prepared<'a> {
    features: &'a [ScatterFeature],
    dim: usize,
    n: Vec<f64>,
    logdet_s: Vec<f64>,
    /// `log c(S_i | n_i)`.
    log_c: Vec<f64>,
    /// `log Gamma_K(n_i / 2)`.
    log_mg: Vec<f64>,
    min_n: f64,
}

impl<'a> Prepared<'a> {
    fn new(features: &'a [ScatterFeature]) -> Result<Self> {
        let first = features.first().ok_or_else(|| Error::Config("no individuals".into()))?;
        let dim = first.window();
        let mut n = Vec::with_capacity(features.len());
        let mut logdet_s = Vec::with_capacity(features.len());
        let mut log_c = Vec::with_capacity(features.len());
        let mut log_mg = Vec::with_capacity(features.len());
        for f in features {
            if f.window() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.window() });
            }
            if f.n <= dim {
                return Err(Error::SeriesTooShort { id: f.id.clone(), len: f.n, window: dim });
            }
            let s = SpdMatrix::new(f.scatter.clone())?;
            let ld = s.logdet();
            let nf = f.n as f64;
            n.push(nf);
            logdet_s.push(ld);
            log_c.push(log_normalizer(dim, nf, ld)?);
            log_mg.push(log_multigamma(dim, nf / 2.0)?);
        }
        let min_n = n.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Prepared { features, dim, n, logdet_s, log_c, log_mg, min_n })
    }

    fn len(&self) -> usize {
        self.features.len()
    }

    fn lambda_lower(&self) -> f64 {
        (self.dim as f64 - 1.0) / self.min_n + LAMBDA_LOWER_MARGIN
    }

    /// Responsibilities and the observed log-likelihood at `(pi, sigma, lambda)`.
    fn e_step(&self, pi: &[f64], sigma: &[SpdMatrix], lambda: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let groups = pi.len();
        if sigma.len() != groups || lambda.len() != groups {
            return Err(Error::LengthMismatch { left: groups, right: sigma.len().min(lambda.len()) });
        }
        for (g, s) in sigma.iter().enumerate() {
            if s.dim() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: s.dim() });
            }
            let nu_min = lambda[g] * self.min_n;
            if !(nu_min > self.dim as f64 - 1.0) {
                return Err(Error::Domain(format!(
                    "lambda_{g} * min(n) = {nu_min} must exceed K-1 = {}",
                    self.dim - 1
                )));
            }
        }
        let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        let logdet_sigma: Vec<f64> = sigma.iter().map(SpdMatrix::logdet).collect();
        let inv_sigma: Vec<DMatrix<f64>> = sigma.iter().map(SpdMatrix::inverse).collect();

        let rows: Vec<Result<(Vec<f64>, f64)>> = (0..self.len())
            .map(|i| {
                let s = &self.features[i].scatter;
                let mut w = Vec::with_capacity(groups);
                for g in 0..groups {
                    let nu = lambda[g] * self.n[i];
                    let tr = inv_sigma[g].component_mul(s).sum();
                    let mut lw = log_pi[g] + log_kernel_parts(nu, self.dim, self.logdet_s[i], logdet_sigma[g], tr);
                    if lambda[g] != 1.0 {
                        lw += self.log_mg[i] - log_multigamma(self.dim, nu / 2.0)?;
                    }
                    w.push(lw);
                }
                let lse = log_sum_exp(&w);
                if !lse.is_finite() {
                    return Err(Error::Numerical(format!(
                        "responsibilities for `{}` underflowed",
                        self.features[i].id
                    )));
                }
                let mut total = 0.0;
                for v in w.iter_mut() {
                    *v = (*v - lse).exp();
                    total += *v;
                }
                for v in w.iter_mut() {
                    *v /= total;
                }
                Ok((w, lse + self.log_c[i]))
            })
            .collect();

        let mut z = DMatrix::zeros(self.len(), groups);
        let mut loglik = 0.0;
        for (i, row) in rows.into_iter().enumerate() {
            let (w, ll) = row?;
            for (g, v) in w.into_iter().enumerate() {
                z[(i, g)] = v;
            }
            loglik += ll;
        }
        Ok((z, loglik))
    }

    fn check_nonempty(&self, z: &DMatrix<f64>) -> Result<()> {
        let floor = EMPTY_CLUSTER_FRACTION * self.len() as f64;
        for g in 0..z.ncols() {
            let weight = z.column(g).sum();
            if !(weight >= floor) {
                return Err(Error::EmptyCluster { group: g, weight });
            }
        }
        Ok(())
    }

    fn update_sigma(&self, z: &DMatrix<f64>, lambda: &[f64]) -> Result<Vec<SpdMatrix>> {
        self.check_nonempty(z)?;
        (0..z.ncols())
            .map(|g| {
                let mut acc = DMatrix::zeros(self.dim, self.dim);
                let mut denom = 0.0;
                for i in 0..self.len() {
                    let w = z[(i, g)];
                    if w != 0.0 {
                        acc += &self.features[i].scatter * w;
                        denom += w * self.n[i];
                    }
                }
                SpdMatrix::new(acc / (lambda[g] * denom))
            })
            .collect()
    }

    fn lambda_score_fn(&self, z_col: &[f64], sigma: &SpdMatrix) -> Result<LambdaScore> {
        if z_col.len() != self.len() {
            return Err(Error::LengthMismatch { left: z_col.len(), right: self.len() });
        }
        if sigma.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: sigma.dim() });
        }
        let shift = sigma.logdet() + self.dim as f64 * std::f64::consts::LN_2;
        let mut fixed = 0.0;
        let mut by_n: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, &w) in z_col.iter().enumerate() {
            if w > 0.0 {
                let nf = self.n[i];
                fixed += w * nf * (self.logdet_s[i] - shift);
                *by_n.entry(self.features[i].n).or_insert(0.0) += w;
            }
        }
        Ok(LambdaScore { dim: self.dim, fixed, by_n: by_n.into_iter().map(|(n, w)| (n as f64, w)).collect() })
    }
}

/// Score for `lambda_g` with the data-dependent constant and the per-length weights aggregated.
struct LambdaScore {
    dim: usize,
    fixed: f64,
    by_n: Vec<(f64, f64)>,
}

impl LambdaScore {
    fn eval(&self, lambda: f64) -> Result<f64> {
        let mut psi_part = 0.0;
        for &(n, w) in &self.by_n {
            let top = lambda * n - self.dim as f64 + 1.0;
            if !(top > 0.0) {
                return Err(Error::Domain(format!("lambda = {lambda} leaves lambda*n - K + 1 <= 0 for n = {n}")));
            }
            let mut s = 0.0;
            for k in 1..=self.dim {
                s += digamma_positive((lambda * n - k as f64 + 1.0) / 2.0);
            }
            psi_part += w * n * s;
        }
        Ok(self.fixed - psi_part)
    }

    /// Root of the decreasing score on `[lower, upper]`, clamped to the boundary without a sign change.
    fn solve(&self, lower: f64, upper: f64) -> Result<f64> {
        if !(lower <= upper) {
            return Err(Error::Config(format!("empty lambda domain ({lower}, {upper}]")));
        }
        let s_hi = self.eval(upper)?;
        if s_hi >= 0.0 {
            return Ok(upper);
        }
        let s_lo = self.eval(lower)?;
        if s_lo <= 0.0 {
            return Ok(lower);
        }
        let (mut lo, mut hi) = (lower, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let s = self.eval(mid)?;
            if s == 0.0 {
                return Ok(mid);
            }
            if s > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Posterior group probabilities `Z[i, g]`.
pub fn responsibilities(
    features: &[ScatterFeature],
    pi: &[f64],
    sigma: &[SpdMatrix],
    lambda: &[f64],
) -> Result<DMatrix<f64>> {
    Ok(Prepared::new(features)?.e_step(pi, sigma, lambda)?.0)
}

pub fn update_pi(z: &DMatrix<f64>) -> Vec<f64> {
    let rows = z.nrows() as f64;
    (0..z.ncols()).map(|g| z.column(g).sum() / rows).collect()
}

/// `Sigma_g = sum_i Z[i,g] S_i / (lambda_g * sum_i n_i Z[i,g])`.
pub fn update_sigma(features: &[ScatterFeature], z: &DMatrix<f64>, lambda: &[f64]) -> Result<Vec<SpdMatrix>> {
    let prep = Prepared::new(features)?;
    if z.nrows() != prep.len() {
        return Err(Error::LengthMismatch { left: z.nrows(), right: prep.len() });
    }
    if lambda.len() != z.ncols() {
        return Err(Error::LengthMismatch { left: lambda.len(), right: z.ncols() });
    }
    prep.update_sigma(z, lambda)
}

/// Derivative of the expected complete-data log-likelihood with respect to `lambda_g` (up to a factor 1/2).
pub fn lambda_score(features: &[ScatterFeature], z_col: &[f64], sigma: &SpdMatrix, lambda: f64) -> Result<f64> {
    Prepared::new(features)?.lambda_score_fn(z_col, sigma)?.eval(lambda)
}

/// Constrained `lambda_g` update on `((K-1)/min(n_i), upper]` by bisection on the monotone score.
pub fn update_lambda(features: &[ScatterFeature], z_col: &[f64], sigma: &SpdMatrix, upper: f64) -> Result<f64> {
    let prep = Prepared::new(features)?;
    let lower = prep.lambda_lower();
    if !(lower <= upper) {
        return Err(Error::Config(format!("empty lambda domain ({lower}, {upper}]")));
    }
    prep.lambda_score_fn(z_col, sigma)?.solve(lower, upper)
}

/// `sum_i log sum_g pi_g f_W(S_i | Sigma_g, lambda_g n_i)`.
pub fn observed_loglik(features: &[ScatterFeature], pi: &[f64], sigma: &[SpdMatrix], lambda: &[f64]) -> Result<f64> {
    Ok(Prepared::new(features)?.e_step(pi, sigma, lambda)?.1)
}

/// MAP labels; exact ties go to the lowest group index.
pub fn map_labels(z: &DMatrix<f64>) -> Vec<usize> {
    (0..z.nrows())
        .map(|i| {
            let mut best = 0;
            for g in 1..z.ncols() {
                if z[(i, g)] > z[(i, best)] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

pub fn one_hot(labels: &[usize], groups: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(labels.len(), groups);
    for (i, &l) in labels.iter().enumerate() {
        z[(i, l)] = 1.0;
    }
    z
}

fn validate(prep: &Prepared, config: &WmmConfig) -> Result<()> {
    if config.groups == 0 {
        return Err(Error::Config("at least one group is required".into()));
    }
    if prep.len() < config.groups {
        return Err(Error::Config(format!("{} individuals cannot fill {} groups", prep.len(), config.groups)));
    }
    if config.window != prep.dim {
        return Err(Error::DimensionMismatch { expected: config.window, got: prep.dim });
    }
    if !(config.tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    if config.max_iter == 0 || config.n_restarts == 0 {
        return Err(Error::Config("max_iter and n_restarts must be positive".into()));
    }
    if config.variant == Variant::Em2 && !(config.lambda_upper >= prep.lambda_lower()) {
        return Err(Error::Config(format!(
            "lambda upper bound {} is below the lower bound {}",
            config.lambda_upper,
            prep.lambda_lower()
        )));
    }
    if let Init::ProvidedLabels(labels) = &config.init {
        if labels.len() != prep.len() {
            return Err(Error::LengthMismatch { left: labels.len(), right: prep.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= config.groups) {
            return Err(Error::Config(format!("provided label {bad} is not below G = {}", config.groups)));
        }
    }
    if let Init::ProvidedResponsibilities(rows) = &config.init {
        if rows.len() != prep.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: prep.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            let valid = row.len() == config.groups
                && row.iter().all(|v| (0.0..=1.0).contains(v))
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
            if !valid {
                return Err(Error::Config(format!(
                    "responsibility row {i} is not a probability vector over {} groups",
                    config.groups
                )));
            }
        }
    }
    Ok(())
}

fn initial_responsibilities(prep: &Prepared, config: &WmmConfig, restart: usize) -> DMatrix<f64> {
    let groups = config.groups;
    let mut rng = seed::rng_for(config.seed, &[0x574d_4d, restart as u64]);
    match &config.init {
        Init::ProvidedLabels(labels) => one_hot(labels, groups),
        Init::ProvidedResponsibilities(rows) => DMatrix::from_fn(prep.len(), groups, |i, g| rows[i][g]),
        Init::RandomResponsibility => {
            let mut z = DMatrix::zeros(prep.len(), groups);
            for i in 0..prep.len() {
                let draws: Vec<f64> = (0..groups).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                for (g, d) in draws.into_iter().enumerate() {
                    z[(i, g)] = d / total;
                }
            }
            z
        }
        Init::KmeansCorrelations => {
            let points: Vec<Vec<f64>> = prep.features.iter().map(ScatterFeature::autocorrelations).collect();
            one_hot(&kmeans(&points, groups, &mut rng), groups)
        }
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub(crate) fn kmeans<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> =
            points.iter().map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = d.len() - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
    }
    let mut labels = vec![0; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn m_step(
    prep: &Prepared,
    config: &WmmConfig,
    z: &DMatrix<f64>,
    lambda: &mut [f64],
) -> Result<(Vec<f64>, Vec<SpdMatrix>)> {
    let pi = update_pi(z);
    let sigma = prep.update_sigma(z, lambda)?;
    if config.variant == Variant::Em2 {
        let lower = prep.lambda_lower();
        for g in 0..config.groups {
            let col: Vec<f64> = z.column(g).iter().copied().collect();
            lambda[g] = prep.lambda_score_fn(&col, &sigma[g])?.solve(lower, config.lambda_upper)?;
        }
    }
    Ok((pi, sigma))
}

fn run_start(
    prep: &Prepared,
    config: &WmmConfig,
    restart: usize,
    mut observer: Option<&mut dyn FnMut(&EmIteration)>,
) -> Result<WmmFit> {
    let mut lambda = match config.variant {
        Variant::Em1 => vec![1.0; config.groups],
        Variant::Em2 => vec![config.lambda_upper.min(1.0); config.groups],
    };
    let z0 = initial_responsibilities(prep, config, restart);
    let (mut pi, mut sigma) = m_step(prep, config, &z0, &mut lambda)?;
    let mut trace = Vec::new();
    let mut prev_z = z0;
    let mut converged = false;
    let mut iters = 0;
    let z = loop {
        let (z, ll) = prep.e_step(&pi, &sigma, &lambda)?;
        iters += 1;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&EmIteration { iter: iters, z: &z, pi: &pi, sigma: &sigma, lambda: &lambda, loglik: ll });
        }
        let rel = trace.last().map_or(f64::INFINITY, |&prev_ll: &f64| ((ll - prev_ll) / prev_ll.abs()).abs());
        if rel < config.tol || (&z - &prev_z).amax() < config.tol {
            converged = true;
        }
        trace.push(ll);
        if converged || iters >= config.max_iter {
            break z;
        }
        let (p, s) = m_step(prep, config, &z, &mut lambda)?;
        pi = p;
        sigma = s;
        prev_z = z;
    };
    let labels = map_labels(&z);
    Ok(WmmFit {
        variant: config.variant,
        pi,
        sigma,
        z,
        lambda,
        loglik_trace: trace,
        labels,
        converged,
        iters,
        restart,
        failed_restarts: 0,
    })
}

/// A single EM run from restart index `restart`, reporting every iteration to `observer`.
pub fn fit_single_start(
    features: &[ScatterFeature],
    config: &WmmConfig,
    restart: usize,
    observer: Option<&mut dyn FnMut(&EmIteration)>,
) -> Result<WmmFit> {
    let prep = Prepared::new(features)?;
    validate(&prep, config)?;
    run_start(&prep, config, restart, observer)
}

/// Best of `n_restarts` EM runs by final observed log-likelihood.
pub fn fit(features: &[ScatterFeature], config: &WmmConfig) -> Result<WmmFit> {
    let prep = Prepared::new(features)?;
    validate(&prep, config)?;
    let restarts = match config.init {
        Init::ProvidedLabels(_) | Init::ProvidedResponsibilities(_) => 1,
        _ => config.n_restarts,
    };
    let runs: Vec<Result<WmmFit>> = (0..restarts).into_par_iter().map(|r| run_start(&prep, config, r, None)).collect();
    let mut best: Option<WmmFit> = None;
    let mut failed = 0;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik() > b.loglik()) {
                    best = Some(f);
                }
            }
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    match best {
        Some(mut f) => {
            f.failed_restarts = failed;
            Ok(f)
        }
        None => Err(Error::AllRestartsFailed {
            restarts,
            last: Box::new(last_err.unwrap_or_else(|| Error::Numerical("no restarts ran".into()))),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn feat1(s: f64, n: usize) -> ScatterFeature {
        ScatterFeature { id: format!("s{s}"), scatter: DMatrix::from_element(1, 1, s), n, gamma: vec![s / n as f64] }
    }

    fn spd1(v: f64) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn toeplitz_feature(id: &str, n: usize, gamma: &[f64]) -> ScatterFeature {
        ScatterFeature::from_autocov(id, n, gamma.to_vec())
    }

    #[test]
    fn identical_kernels_split_evenly() {
        let fs = vec![toeplitz_feature("a", 50, &[1.0, 0.3]), toeplitz_feature("b", 80, &[2.0, -0.5])];
        let sig = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])).unwrap();
        let z = responsibilities(&fs, &[0.5, 0.5], &[sig.clone(), sig], &[1.0, 1.0]).unwrap();
        for v in z.iter() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn degenerate_prior_pins_responsibilities() {
        let fs = vec![toeplitz_feature("a", 50, &[1.0, 0.3]), toeplitz_feature("b", 80, &[2.0, -0.5])];
        let s1 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])).unwrap();
        let s2 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, -0.2, -0.2, 3.0])).unwrap();
        let z = responsibilities(&fs, &[1.0, 0.0], &[s1, s2], &[1.0, 1.0]).unwrap();
        for i in 0..2 {
            assert_eq!(z[(i, 0)], 1.0);
            assert_eq!(z[(i, 1)], 0.0);
        }
    }

    #[test]
    fn one_dimensional_responsibility_by_hand() {
        // log h1 = -1, log h2 = log(1/2) - 1/2
        let fs = vec![feat1(2.0, 2)];
        let z = responsibilities(&fs, &[0.5, 0.5], &[spd1(1.0), spd1(2.0)], &[1.0, 1.0]).unwrap();
        let a = (-1.0f64).exp();
        let b = (0.5f64.ln() - 0.5).exp();
        assert_abs_diff_eq!(z[(0, 0)], a / (a + b), epsilon = 1e-14);
        assert_abs_diff_eq!(z[(0, 0)], 0.5481, epsilon = 1e-4);
        assert_abs_diff_eq!(z[(0, 1)], 0.4519, epsilon = 1e-4);
    }

    #[test]
    fn pi_updates() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let pi = update_pi(&z);
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(update_pi(&DMatrix::from_element(4, 2, 0.5)), vec![0.5, 0.5]);
        let pi = update_pi(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.7, 0.3]));
        assert_abs_diff_eq!(pi[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn sigma_updates() {
        let a = toeplitz_feature("a", 40, &[2.0, 0.5, 0.1]);
        let b = toeplitz_feature("b", 60, &[1.0, -0.2, 0.3]);
        let one = update_sigma(std::slice::from_ref(&a), &DMatrix::from_element(1, 1, 1.0), &[1.0]).unwrap();
        assert!((one[0].matrix() - &a.scatter / 40.0).amax() < 1e-15);

        let fs = vec![a.clone(), b.clone()];
        let z = DMatrix::from_element(2, 1, 1.0);
        let pooled = update_sigma(&fs, &z, &[1.0]).unwrap();
        assert!((pooled[0].matrix() - (&a.scatter + &b.scatter) / 100.0).amax() < 1e-15);
        let doubled = update_sigma(&fs, &z, &[2.0]).unwrap();
        assert!((doubled[0].matrix() * 2.0 - pooled[0].matrix()).amax() < 1e-15);

        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(update_sigma(&fs, &z, &[1.0, 1.0]), Err(Error::EmptyCluster { group: 1, .. })));
    }

    fn gamma_case(sigma2: f64) -> (Vec<ScatterFeature>, SpdMatrix) {
        // psi(1) = -gamma_E, so log(S / (2 sigma^2)) = psi(1) puts the root at lambda = 1.
        let s = 2.0 * sigma2 * (-EULER_GAMMA).exp();
        (vec![feat1(s, 2)], spd1(sigma2))
    }

    #[test]
    fn lambda_score_root_at_one() {
        let (fs, sig) = gamma_case(0.7);
        assert_abs_diff_eq!(lambda_score(&fs, &[1.0], &sig, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(lambda_score(&fs, &[0.0], &sig, 1.0).unwrap(), 0.0);
        let lam = update_lambda(&fs, &[1.0], &sig, 3.0).unwrap();
        assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-8);
        let lam = update_lambda(&fs, &[1.0], &sig, 1.0).unwrap();
        assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn lambda_clamps_to_boundaries() {
        let (fs, sig) = gamma_case(0.7);
        // Root at 1 lies above an upper bound of 0.5: score(0.5) > 0.
        assert!(lambda_score(&fs, &[1.0], &sig, 0.5).unwrap() > 0.0);
        assert_eq!(update_lambda(&fs, &[1.0], &sig, 0.5).unwrap(), 0.5);
        // Negative score already at the lower bound.
        let score = LambdaScore { dim: 1, fixed: -1e7, by_n: vec![(2.0, 1.0)] };
        let lower = 1e-6;
        assert!(score.eval(lower).unwrap() < 0.0);
        assert_eq!(score.solve(lower, 2.0).unwrap(), lower);
        // An all-zero column has a flat score and lands on the upper bound.
        assert_eq!(update_lambda(&fs, &[0.0], &sig, 2.0).unwrap(), 2.0);
        assert!(matches!(update_lambda(&fs, &[1.0], &sig, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn observed_loglik_reductions() {
        let a = toeplitz_feature("a", 40, &[2.0, 0.5, 0.1]);
        let b = toeplitz_feature("b", 60, &[1.0, -0.2, 0.3]);
        let sig =
            SpdMatrix::new(DMatrix::from_row_slice(3, 3, &[1.5, 0.2, 0.0, 0.2, 1.5, 0.2, 0.0, 0.2, 1.5])).unwrap();
        let fs = vec![a.clone(), b.clone()];
        let ll = observed_loglik(&fs, &[1.0], std::slice::from_ref(&sig), &[1.0]).unwrap();
        let direct: f64 = fs
            .iter()
            .map(|f| {
                crate::special::wishart_log_density(&SpdMatrix::new(f.scatter.clone()).unwrap(), &sig, f.n as f64)
                    .unwrap()
            })
            .sum();
        assert_abs_diff_eq!(ll, direct, epsilon = 1e-9);

        let s2 = SpdMatrix::new(sig.matrix() * 2.0).unwrap();
        let pi = [0.3, 0.7];
        let sigmas = [sig, s2];
        let ll1 = observed_loglik(&fs, &pi, &sigmas, &[1.0, 1.0]).unwrap();
        let dup = vec![a.clone(), b.clone(), a, b];
        let ll2 = observed_loglik(&dup, &pi, &sigmas, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(ll2, 2.0 * ll1, epsilon = 1e-9);
    }

    #[test]
    fn observed_loglik_one_dimensional_chi_square() {
        use statrs::distribution::{Continuous, Gamma};
        let fs = vec![feat1(2.0, 2), feat1(5.0, 4)];
        let pi = [0.25, 0.75];
        let sig = [spd1(1.0), spd1(3.0)];
        let dens = |x: f64, nu: f64, s2: f64| Gamma::new(nu / 2.0, 1.0 / (2.0 * s2)).unwrap().pdf(x);
        let expected = (0.25 * dens(2.0, 2.0, 1.0) + 0.75 * dens(2.0, 2.0, 3.0)).ln()
            + (0.25 * dens(5.0, 4.0, 1.0) + 0.75 * dens(5.0, 4.0, 3.0)).ln();
        assert_abs_diff_eq!(observed_loglik(&fs, &pi, &sig, &[1.0, 1.0]).unwrap(), expected, epsilon = 1e-12);
        let lam = [0.8, 1.3];
        let expected = (0.25 * dens(2.0, 1.6, 1.0) + 0.75 * dens(2.0, 2.6, 3.0)).ln()
            + (0.25 * dens(5.0, 3.2, 1.0) + 0.75 * dens(5.0, 5.2, 3.0)).ln();
        assert_abs_diff_eq!(observed_loglik(&fs, &pi, &sig, &lam).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn single_group_is_closed_form() {
        let fs = vec![
            toeplitz_feature("a", 40, &[2.0, 0.5, 0.1]),
            toeplitz_feature("b", 60, &[1.0, -0.2, 0.3]),
            toeplitz_feature("c", 30, &[3.0, 1.0, 0.2]),
        ];
        let fit = fit(&fs, &WmmConfig::new(1, 3)).unwrap();
        let pooled = (&fs[0].scatter + &fs[1].scatter + &fs[2].scatter) / 130.0;
        assert!((fit.sigma[0].matrix() - pooled).amax() < 1e-14);
        assert_eq!(fit.pi, vec![1.0]);
        assert!(fit.converged);
    }

    #[test]
    fn configuration_errors() {
        let fs = vec![toeplitz_feature("a", 40, &[2.0, 0.5, 0.1])];
        assert!(matches!(fit(&fs, &WmmConfig::new(2, 3)), Err(Error::Config(_))));
        assert!(matches!(fit(&fs, &WmmConfig::new(1, 4)), Err(Error::DimensionMismatch { .. })));
        let mut c = WmmConfig::new(1, 3);
        c.tol = 0.0;
        assert!(matches!(fit(&fs, &c), Err(Error::Config(_))));
        let c = WmmConfig::new(1, 3).with_init(Init::ProvidedLabels(vec![1]));
        assert!(matches!(fit(&fs, &c), Err(Error::Config(_))));
        let c = WmmConfig::new(1, 3).with_init(Init::ProvidedResponsibilities(vec![vec![0.5]]));
        assert!(matches!(fit(&fs, &c), Err(Error::Config(_))));
        let c = WmmConfig::new(1, 3).with_init(Init::ProvidedResponsibilities(vec![vec![1.0], vec![1.0]]));
        assert!(matches!(fit(&fs, &c), Err(Error::LengthMismatch { .. })));
        let c = WmmConfig::new(1, 3).with_init(Init::ProvidedResponsibilities(vec![vec![1.0]]));
        let f = fit(&fs, &c).unwrap();
        assert!(f.converged);
        assert_eq!(f.iters, 1);
        let mut c = WmmConfig::new(1, 3).with_variant(Variant::Em2);
        c.lambda_upper = 0.01;
        assert!(matches!(fit(&fs, &c), Err(Error::Config(_))));
    }

    #[test]
    fn map_ties_go_to_lowest_index() {
        let z = DMatrix::from_row_slice(2, 3, &[0.4, 0.4, 0.2, 0.2, 0.4, 0.4]);
        assert_eq!(map_labels(&z), vec![0, 1]);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(vec![0.9 + 0.001 * i as f64]);
            pts.push(vec![-0.9 - 0.001 * i as f64]);
        }
        let mut rng = seed::rng_for(1, &[]);
        let labels = kmeans(&pts, 2, &mut rng);
        for pair in labels.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert!(labels.iter().step_by(2).all(|&l| l == labels[0]));
    }
}
