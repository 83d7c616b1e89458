//! Information criteria for the number of groups and the per-group AR order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScatterFeature;
use crate::wmm::{self, WmmConfig, WmmFit};
use crate::yule_walker::{innovation_ratio, leading_block};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamCount {
    /// `G * (K - 1)`: one AR coefficient vector per group.
    #[default]
    Coefficients,
    /// `G * K - 1`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    #[default]
    Bic,
}

pub fn parameter_count(groups: usize, window: usize, count: ParamCount) -> usize {
    match count {
        ParamCount::Coefficients => groups * window.saturating_sub(1),
        ParamCount::Literal => (groups * window).saturating_sub(1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcValues {
    pub aic: f64,
    pub bic: f64,
    pub r: usize,
}

impl IcValues {
    pub fn get(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

/// AIC and BIC from a residual term `sum n_i log sigma2_i`.
pub fn ic_from_parts(r: usize, total_n: f64, residual: f64) -> IcValues {
    IcValues { aic: 2.0 * r as f64 + residual, bic: r as f64 * total_n.ln() + residual, r }
}

/// `sum n_i log sigma2_i` with each `sigma2_i` taken at the individual's MAP group.
pub fn residual_term(fit: &WmmFit, features: &[ScatterFeature]) -> Result<f64> {
    if fit.labels.len() != features.len() {
        return Err(Error::LengthMismatch { left: fit.labels.len(), right: features.len() });
    }
    let ratios = fit.sigma.iter().map(innovation_ratio).collect::<Result<Vec<_>>>()?;
    Ok(features.iter().zip(&fit.labels).map(|(f, &g)| f.n as f64 * (f.gamma0() * ratios[g]).ln()).sum())
}

pub fn group_ic(fit: &WmmFit, features: &[ScatterFeature]) -> Result<IcValues> {
    group_ic_with(fit, features, ParamCount::default())
}

pub fn group_ic_with(fit: &WmmFit, features: &[ScatterFeature], count: ParamCount) -> Result<IcValues> {
    let window = fit.sigma.first().map(|s| s.dim()).unwrap_or(0);
    let r = parameter_count(fit.groups(), window, count);
    let total_n: f64 = features.iter().map(|f| f.n as f64).sum();
    let ic = ic_from_parts(r, total_n, residual_term(fit, features)?);
    if !ic.aic.is_finite() || !ic.bic.is_finite() {
        return Err(Error::Numerical(format!("non-finite information criterion for G = {}", fit.groups())));
    }
    Ok(ic)
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub groups: usize,
    pub ic: Option<IcValues>,
    pub fit: Option<WmmFit>,
    pub error: Option<Error>,
}

#[derive(Debug, Clone)]
pub struct IcReport {
    pub candidates: Vec<Candidate>,
    pub selected_aic: Option<usize>,
    pub selected_bic: Option<usize>,
}

impl IcReport {
    pub fn selected(&self, criterion: Criterion) -> Option<usize> {
        match criterion {
            Criterion::Aic => self.selected_aic,
            Criterion::Bic => self.selected_bic,
        }
    }

    pub fn candidate(&self, groups: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.groups == groups)
    }
}

fn argmin(candidates: &[Candidate], criterion: Criterion) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        let Some(ic) = c.ic else { continue };
        let v = ic.get(criterion);
        match best {
            Some((g, b)) if v > b || (v == b && c.groups > g) => {}
            _ => best = Some((c.groups, v)),
        }
    }
    best.map(|(g, _)| g)
}

/// Fits every candidate `G` with the same seed schedule and scores it.
/// Candidates whose fit fails are kept in the report with their error and skipped by the argmin.
pub fn select_groups(
    features: &[ScatterFeature],
    group_range: &[usize],
    base: &WmmConfig,
    count: ParamCount,
) -> Result<IcReport> {
    if group_range.is_empty() {
        return Err(Error::Config("empty range of group counts".into()));
    }
    let mut range = group_range.to_vec();
    range.sort_unstable();
    range.dedup();
    if range[0] == 0 {
        return Err(Error::Config("group count must be at least 1".into()));
    }
    if let Some(&max) = range.last() {
        if max > features.len() {
            return Err(Error::Config(format!("G = {max} exceeds the {} individuals", features.len())));
        }
    }
    let mut candidates: Vec<Candidate> = range
        .par_iter()
        .map(|&g| {
            let config = WmmConfig { groups: g, ..base.clone() };
            match wmm::fit(features, &config).and_then(|fit| Ok((group_ic_with(&fit, features, count)?, fit))) {
                Ok((ic, fit)) => Candidate { groups: g, ic: Some(ic), fit: Some(fit), error: None },
                Err(e) => Candidate { groups: g, ic: None, fit: None, error: Some(e) },
            }
        })
        .collect();
    candidates.sort_by_key(|c| c.groups);
    Ok(IcReport {
        selected_aic: argmin(&candidates, Criterion::Aic),
        selected_bic: argmin(&candidates, Criterion::Bic),
        candidates,
    })
}

/// Per-group AR order in `0..K`, scored on the leading sub-blocks of each fitted scale matrix.
/// Uses only the cached `gamma0` and `n` of the MAP members.
pub fn select_lag_per_group(fit: &WmmFit, features: &[ScatterFeature], criterion: Criterion) -> Result<Vec<usize>> {
    if fit.labels.len() != features.len() {
        return Err(Error::LengthMismatch { left: fit.labels.len(), right: features.len() });
    }
    let mut out = Vec::with_capacity(fit.groups());
    for (g, sigma) in fit.sigma.iter().enumerate() {
        let members: Vec<&ScatterFeature> =
            features.iter().zip(&fit.labels).filter(|(_, &l)| l == g).map(|(f, _)| f).collect();
        let total_n: f64 = members.iter().map(|f| f.n as f64).sum();
        let base: f64 = members.iter().map(|f| f.n as f64 * f.gamma0().ln()).sum();
        let mut best = (0usize, base);
        for p in 1..sigma.dim() {
            let ratio = innovation_ratio(&leading_block(sigma, p + 1)?)?;
            let residual = base + total_n * ratio.ln();
            let penalty = match criterion {
                Criterion::Aic => 2.0 * p as f64,
                Criterion::Bic => p as f64 * total_n.max(1.0).ln(),
            };
            let score = penalty + residual;
            if score < best.1 {
                best = (p, score);
            }
        }
        out.push(best.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::SpdMatrix;
    use crate::wmm::Variant;
    use nalgebra::DMatrix;

    fn toeplitz(rho: &[f64]) -> SpdMatrix {
        let k = rho.len();
        SpdMatrix::new(DMatrix::from_fn(k, k, |r, c| rho[r.abs_diff(c)])).unwrap()
    }

    fn fit_with(sigma: Vec<SpdMatrix>, labels: Vec<usize>) -> WmmFit {
        let g = sigma.len();
        let z = wmm::one_hot(&labels, g);
        WmmFit {
            variant: Variant::Em1,
            pi: wmm::update_pi(&z),
            lambda: vec![1.0; g],
            sigma,
            z,
            loglik_trace: vec![0.0],
            labels,
            converged: true,
            iters: 1,
            restart: 0,
            failed_restarts: 0,
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(5, 8, ParamCount::Coefficients), 35);
        assert_eq!(parameter_count(5, 8, ParamCount::Literal), 39);
        assert_eq!(parameter_count(1, 3, ParamCount::Coefficients), 2);
    }

    #[test]
    fn penalty_free_reduction() {
        let ic = ic_from_parts(0, 300.0, -12.5);
        assert_eq!(ic.aic, -12.5);
        assert_eq!(ic.bic, -12.5);
    }

    #[test]
    fn halving_variances_shifts_aic_by_n_log2() {
        let feats = vec![
            ScatterFeature::from_autocov("a", 100, vec![2.0, 0.8, 0.3]),
            ScatterFeature::from_autocov("b", 150, vec![1.0, -0.2, 0.1]),
        ];
        let half: Vec<ScatterFeature> = feats.iter().map(|f| f.scaled(0.5)).collect();
        let fit = fit_with(vec![toeplitz(&[1.0, 0.4, 0.1]), toeplitz(&[1.0, -0.2, 0.1])], vec![0, 1]);
        let a = group_ic(&fit, &feats).unwrap();
        let b = group_ic(&fit, &half).unwrap();
        assert!((a.aic - b.aic - 250.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!(a.bic > a.aic);
    }

    #[test]
    fn ic_ignores_soft_responsibilities_beyond_map() {
        let feats = vec![
            ScatterFeature::from_autocov("a", 100, vec![2.0, 0.8, 0.3]),
            ScatterFeature::from_autocov("b", 150, vec![1.0, -0.2, 0.1]),
        ];
        let mut fit = fit_with(vec![toeplitz(&[1.0, 0.4, 0.1]), toeplitz(&[1.0, -0.2, 0.1])], vec![0, 1]);
        let before = group_ic(&fit, &feats).unwrap();
        fit.z = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]);
        assert_eq!(group_ic(&fit, &feats).unwrap(), before);
    }

    #[test]
    fn argmin_prefers_smaller_g_on_ties() {
        let mk = |g, v| Candidate { groups: g, ic: Some(IcValues { aic: v, bic: v, r: g }), fit: None, error: None };
        let c = vec![mk(1, 3.0), mk(2, 1.0), mk(3, 1.0)];
        assert_eq!(argmin(&c, Criterion::Bic), Some(2));
        let missing = Candidate { groups: 4, ic: None, fit: None, error: Some(Error::Numerical("x".into())) };
        assert_eq!(argmin(&[missing], Criterion::Aic), None);
    }

    #[test]
    fn lag_selection_on_exact_blocks() {
        let feats: Vec<ScatterFeature> =
            (0..4).map(|i| ScatterFeature::from_autocov(format!("s{i}"), 500, vec![1.0, 0.0, 0.0, 0.0])).collect();
        // AR(1) with phi = 0.5 in group 0, white noise in group 1.
        let ar1 = toeplitz(&[1.0, 0.5, 0.25, 0.125]);
        let wn = toeplitz(&[1.0, 0.0, 0.0, 0.0]);
        let fit = fit_with(vec![ar1, wn], vec![0, 0, 1, 1]);
        assert_eq!(select_lag_per_group(&fit, &feats, Criterion::Aic).unwrap(), vec![1, 0]);
        assert_eq!(select_lag_per_group(&fit, &feats, Criterion::Bic).unwrap(), vec![1, 0]);
    }

    #[test]
    fn range_validation() {
        let feats = vec![ScatterFeature::from_autocov("a", 100, vec![1.0, 0.1])];
        let cfg = WmmConfig::new(1, 2);
        assert!(select_groups(&feats, &[], &cfg, ParamCount::Coefficients).is_err());
        assert!(select_groups(&feats, &[2], &cfg, ParamCount::Coefficients).is_err());
        assert!(select_groups(&feats, &[0], &cfg, ParamCount::Coefficients).is_err());
    }
}
