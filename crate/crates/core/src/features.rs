//! Per-series sufficient statistics.
//!
//! Every downstream fit consumes a [`ScatterFeature`]: the `K x K` Toeplitz
//! scatter matrix `S[r, c] = n * gamma(|r - c|)` built from the divisor-`n`
//! sample autocovariances of a zero-mean series.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.len() < 2 {
            return Err(Error::InsufficientData { id, len: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { id, pos });
        }
        Ok(TimeSeries { id, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> TimeSeries {
        TimeSeries { id: self.id.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterFeature {
    pub id: String,
    /// Toeplitz scatter matrix, `K x K`.
    pub scatter: DMatrix<f64>,
    /// Series length, used as the Wishart degrees of freedom.
    pub n: usize,
    /// `gamma[k]` for `k = 0..K`; autocorrelations when the feature is normalized.
    pub gamma: Vec<f64>,
}

impl ScatterFeature {
    /// Builds the Toeplitz scatter matrix from precomputed autocovariances.
    pub fn from_autocov(id: impl Into<String>, n: usize, gamma: Vec<f64>) -> Self {
        let k = gamma.len();
        let nf = n as f64;
        let scatter = DMatrix::from_fn(k, k, |r, c| nf * gamma[r.abs_diff(c)]);
        ScatterFeature { id: id.into(), scatter, n, gamma }
    }

    pub fn window(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma[0]
    }

    /// Autocorrelations at lags `1..K`.
    pub fn autocorrelations(&self) -> Vec<f64> {
        let g0 = self.gamma[0];
        self.gamma[1..].iter().map(|g| g / g0).collect()
    }

    /// Leading `p x p` block of the scatter matrix (the `X'X` moment matrix of an AR(p) fit).
    pub fn leading_block(&self, p: usize) -> DMatrix<f64> {
        self.scatter.view((0, 0), (p, p)).into_owned()
    }

    pub fn scaled(&self, c: f64) -> ScatterFeature {
        ScatterFeature {
            id: self.id.clone(),
            scatter: &self.scatter * c,
            n: self.n,
            gamma: self.gamma.iter().map(|g| g * c).collect(),
        }
    }
}

/// Subtracts the arithmetic mean.
pub fn center(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 2 {
        return Err(Error::InsufficientData { id: series.id.clone(), len: series.len() });
    }
    let first = series.values[0];
    if series.values.iter().all(|&v| v == first) {
        return Ok(TimeSeries { id: series.id.clone(), values: vec![0.0; series.len()] });
    }
    let mean = series.values.iter().sum::<f64>() / series.len() as f64;
    Ok(TimeSeries { id: series.id.clone(), values: series.values.iter().map(|v| v - mean).collect() })
}

/// Sample autocovariance at lag `k` with divisor `n`. Assumes a centered series.
pub fn autocov(series: &TimeSeries, k: usize) -> Result<f64> {
    let n = series.len();
    if k >= n {
        return Err(Error::LagOutOfRange { lag: k, len: n });
    }
    let y = &series.values;
    let s: f64 = y[..n - k].iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
    Ok(s / n as f64)
}

fn check_window(series: &TimeSeries, window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::Config(format!("window size must be at least 2, got {window}")));
    }
    if series.len() <= window {
        return Err(Error::SeriesTooShort { id: series.id.clone(), len: series.len(), window });
    }
    Ok(())
}

pub fn scatter_matrix(series: &TimeSeries, window: usize) -> Result<ScatterFeature> {
    check_window(series, window)?;
    let gamma = (0..window).map(|k| autocov(series, k)).collect::<Result<Vec<_>>>()?;
    if !(gamma[0] > 0.0) {
        return Err(Error::DegenerateSeries { id: series.id.clone() });
    }
    Ok(ScatterFeature::from_autocov(series.id.clone(), series.len(), gamma))
}

/// Scatter matrix of autocorrelations: `S[r, c] = n * rho(|r - c|)`.
pub fn normalized_scatter(series: &TimeSeries, window: usize) -> Result<ScatterFeature> {
    let raw = scatter_matrix(series, window)?;
    let g0 = raw.gamma[0];
    let rho: Vec<f64> = raw.gamma.iter().map(|g| g / g0).collect();
    Ok(ScatterFeature::from_autocov(raw.id, raw.n, rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureOptions {
    pub window: usize,
    pub center: bool,
    pub normalized: bool,
}

impl FeatureOptions {
    pub fn new(window: usize) -> Self {
        FeatureOptions { window, center: true, normalized: false }
    }
}

pub fn extract_one(series: &TimeSeries, opts: &FeatureOptions) -> Result<ScatterFeature> {
    let centered;
    let s = if opts.center {
        centered = center(series)?;
        &centered
    } else {
        series
    };
    if opts.normalized {
        normalized_scatter(s, opts.window)
    } else {
        scatter_matrix(s, opts.window)
    }
}

/// Features for a whole panel, in input order.
pub fn extract_features(panel: &[TimeSeries], opts: &FeatureOptions) -> Result<Vec<ScatterFeature>> {
    panel.par_iter().map(|s| extract_one(s, opts)).collect()
}
