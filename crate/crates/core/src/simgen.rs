//! ARMA panel generation for the six benchmark scenarios and the replicated
//! accuracy benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, ArEstimator, CovarianceModel, GmmConfig, Linkage};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureOptions, ScatterFeature, TimeSeries};
use crate::seed::{derive_seed, rng_for};
use crate::wmm::{self, Init, Variant, WmmConfig};
use crate::yule_walker::is_stationary;

pub const BURN_IN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSpec {
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub n: usize,
    pub count: usize,
    pub group: usize,
}

impl ArmaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Config(format!("innovation variance must be positive, got {}", self.sigma2)));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("series length must be at least 10, got {}", self.n)));
        }
        if self.phi.iter().chain(&self.theta).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite ARMA coefficient".into()));
        }
        if !is_stationary(&self.phi) {
            return Err(Error::Config(format!("AR polynomial {:?} has a root on or inside the unit circle", self.phi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCase {
    pub case_id: usize,
    pub specs: Vec<ArmaSpec>,
}

impl ScenarioCase {
    pub fn individuals(&self) -> usize {
        self.specs.iter().map(|s| s.count).sum()
    }

    pub fn truth(&self) -> Vec<usize> {
        self.specs.iter().flat_map(|s| std::iter::repeat_n(s.group, s.count)).collect()
    }

    pub fn groups(&self) -> usize {
        self.specs.iter().map(|s| s.group + 1).max().unwrap_or(0)
    }
}

/// One ARMA path of length `spec.n` after discarding [`BURN_IN`] samples.
pub fn simulate_arma_with<R: Rng>(spec: &ArmaSpec, id: impl Into<String>, rng: &mut R) -> Result<TimeSeries> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let total = BURN_IN + spec.n;
    let e: Vec<f64> = (0..total).map(|_| normal.sample(rng)).collect();
    let mut y = vec![0.0; total];
    for t in 0..total {
        let mut v = e[t];
        for (k, &p) in spec.phi.iter().enumerate() {
            if t > k {
                v += p * y[t - k - 1];
            }
        }
        for (j, &q) in spec.theta.iter().enumerate() {
            if t > j {
                v += q * e[t - j - 1];
            }
        }
        y[t] = v;
    }
    TimeSeries::new(id, y.split_off(BURN_IN))
}

pub fn simulate_arma(spec: &ArmaSpec, seed: u64) -> Result<TimeSeries> {
    simulate_arma_with(spec, "x", &mut rng_for(seed, &[]))
}

fn ar(phi: &[f64], n: usize, sigma2: f64, count: usize, group: usize) -> ArmaSpec {
    ArmaSpec { phi: phi.to_vec(), theta: Vec::new(), sigma2, n, count, group }
}

fn ma(theta: f64, n: usize, count: usize, group: usize) -> ArmaSpec {
    ArmaSpec { phi: Vec::new(), theta: vec![theta], sigma2: 100.0, n, count, group }
}

/// The six two-group simulation settings, 200 individuals each.
pub fn scenario(case_id: usize) -> Result<ScenarioCase> {
    let (g1a, g2a) = ([0.6, -0.05], [0.5, -0.1]);
    let (g1b, g2b) = ([0.75, -0.05], [0.65, -0.1]);
    let specs = match case_id {
        1 => vec![ar(&g1a, 100, 0.01, 100, 0), ar(&g2a, 100, 0.01, 100, 1)],
        2 => vec![ar(&g1a, 100, 100.0, 100, 0), ar(&g2a, 100, 100.0, 100, 1)],
        3 => vec![
            ar(&g1b, 100, 1.0, 50, 0),
            ar(&g1b, 1000, 1.0, 50, 0),
            ar(&g2b, 100, 1.0, 50, 1),
            ar(&g2b, 1000, 1.0, 50, 1),
        ],
        4 => vec![
            ar(&g1b, 100, 1.0, 50, 0),
            ar(&g1b, 100, 100.0, 50, 0),
            ar(&g2b, 100, 1.0, 50, 1),
            ar(&g2b, 100, 100.0, 50, 1),
        ],
        5 => vec![ma(0.95, 100, 100, 0), ma(0.75, 100, 100, 1)],
        6 => vec![ma(0.95, 100, 50, 0), ma(0.95, 1000, 50, 0), ma(0.75, 100, 50, 1), ma(0.75, 1000, 50, 1)],
        _ => return Err(Error::Config(format!("unknown case {case_id}; expected 1..=6"))),
    };
    Ok(ScenarioCase { case_id, specs })
}

/// Simulates every individual of `case`; individual `i` draws from its own stream `(seed, [i])`.
pub fn simulate_panel(case: &ScenarioCase, seed: u64) -> Result<(Vec<TimeSeries>, Vec<usize>)> {
    for s in &case.specs {
        s.validate()?;
    }
    let specs: Vec<&ArmaSpec> = case.specs.iter().flat_map(|s| std::iter::repeat_n(s, s.count)).collect();
    let width = specs.len().to_string().len();
    let panel = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| simulate_arma_with(s, format!("s{:0width$}", i + 1), &mut rng_for(seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok((panel, case.truth()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Em1,
    Em2,
    Em1Norm,
    Em2Norm,
    Acf,
    Pacf,
    Pic,
    Gmm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Acf,
        Method::Pacf,
        Method::Pic,
        Method::Gmm,
        Method::Em1,
        Method::Em2,
        Method::Em1Norm,
        Method::Em2Norm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Em1 => "em1",
            Method::Em2 => "em2",
            Method::Em1Norm => "em1_norm",
            Method::Em2Norm => "em2_norm",
            Method::Acf => "acf",
            Method::Pacf => "pacf",
            Method::Pic => "pic",
            Method::Gmm => "gmm",
        }
    }

    fn tag(self) -> u64 {
        Method::ALL.iter().position(|&m| m == self).unwrap_or(0) as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cases: Vec<usize>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub window: usize,
    pub groups: usize,
    pub seed: u64,
    pub restarts: usize,
    pub init: Init,
    pub linkage: Linkage,
    pub estimator: ArEstimator,
    #[serde(default)]
    pub gmm_covariance: CovarianceModel,
}

impl BenchConfig {
    pub fn new(cases: Vec<usize>, methods: Vec<Method>, reps: usize, seed: u64) -> Self {
        BenchConfig {
            cases,
            methods,
            reps,
            window: 3,
            groups: 2,
            seed,
            restarts: 10,
            init: Init::RandomResponsibility,
            linkage: Linkage::Complete,
            estimator: ArEstimator::YuleWalker,
            gmm_covariance: CovarianceModel::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub case_id: usize,
    pub method: Method,
    pub mean_accuracy: f64,
    /// Sample standard deviation of the per-replication accuracies.
    pub sd_across_reps: f64,
    pub reps: usize,
    pub failures: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per case; excluded from serialization so reports stay reproducible.
    #[serde(skip)]
    pub runtime_secs: Vec<(usize, f64)>,
}

impl BenchmarkReport {
    pub fn row(&self, case_id: usize, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.case_id == case_id && r.method == method)
    }
}

/// Runs one method on one simulated panel and returns its MAP labels.
pub fn cluster_with(
    method: Method,
    panel: &[TimeSeries],
    raw: &[ScatterFeature],
    config: &BenchConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let wmm_run = |variant: Variant, normalized: bool| -> Result<Vec<usize>> {
        let owned;
        let features = if normalized {
            owned =
                extract_features(panel, &FeatureOptions { normalized: true, ..FeatureOptions::new(config.window) })?;
            &owned
        } else {
            raw
        };
        let cfg = WmmConfig {
            variant,
            seed,
            n_restarts: config.restarts,
            init: config.init.clone(),
            ..WmmConfig::new(config.groups, config.window)
        };
        Ok(wmm::fit(features, &cfg)?.labels)
    };
    let coeffs = || -> Result<Vec<Vec<f64>>> {
        match config.estimator {
            ArEstimator::YuleWalker => raw.iter().map(baselines::yw_from_feature).collect(),
            est => panel.iter().map(|s| baselines::ar_coefficients(s, config.window, est)).collect(),
        }
    };
    match method {
        Method::Em1 => wmm_run(Variant::Em1, false),
        Method::Em2 => wmm_run(Variant::Em2, false),
        Method::Em1Norm => wmm_run(Variant::Em1, true),
        Method::Em2Norm => wmm_run(Variant::Em2, true),
        Method::Acf => baselines::hierarchical_cluster(&baselines::acf_distances(raw)?, config.groups, config.linkage),
        Method::Pacf => {
            baselines::hierarchical_cluster(&baselines::pacf_distances(raw)?, config.groups, config.linkage)
        }
        Method::Pic => {
            let ids = raw.iter().map(|f| f.id.clone()).collect();
            let d = baselines::DistanceMatrix::euclidean(ids, &coeffs()?)?;
            baselines::hierarchical_cluster(&d, config.groups, config.linkage)
        }
        Method::Gmm => {
            let cfg = GmmConfig {
                seed,
                n_restarts: config.restarts,
                covariance: config.gmm_covariance,
                ..GmmConfig::new(config.groups)
            };
            Ok(baselines::gmm_fit(&coeffs()?, &cfg)?.labels)
        }
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Replicated accuracy benchmark. Replication `r` of case `c` simulates its panel from
/// `(seed, [c, r])`, and method `m` draws its restarts from `(seed, [c, r, tag(m)])`, so any
/// subset of methods sees the same data.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchmarkReport> {
    if config.reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    if config.methods.is_empty() || config.cases.is_empty() {
        return Err(Error::Config("at least one case and one method are required".into()));
    }
    let cases = config.cases.iter().map(|&c| scenario(c)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut runtime_secs = Vec::new();
    if config.reps == 1 {
        warnings.push("a single replication leaves the standard deviation undefined; reported as 0".to_string());
    }
    for case in &cases {
        let start = Instant::now();
        let c = case.case_id as u64;
        let per_rep: Vec<Vec<Option<f64>>> = (0..config.reps)
            .into_par_iter()
            .map(|r| {
                let data_seed = derive_seed(config.seed, &[c, r as u64]);
                let Ok((panel, truth)) = simulate_panel(case, data_seed) else {
                    return vec![None; config.methods.len()];
                };
                let Ok(raw) = extract_features(&panel, &FeatureOptions::new(config.window)) else {
                    return vec![None; config.methods.len()];
                };
                config
                    .methods
                    .iter()
                    .map(|&m| {
                        let seed = derive_seed(config.seed, &[c, r as u64, m.tag()]);
                        cluster_with(m, &panel, &raw, config, seed)
                            .and_then(|labels| baselines::clustering_accuracy(&labels, &truth))
                            .ok()
                    })
                    .collect()
            })
            .collect();
        runtime_secs.push((case.case_id, start.elapsed().as_secs_f64()));
        for (k, &method) in config.methods.iter().enumerate() {
            let accuracies: Vec<f64> = per_rep.iter().filter_map(|rep| rep[k]).collect();
            let failures = config.reps - accuracies.len();
            if failures > 0 {
                warnings
                    .push(format!("case {} {method}: {failures} of {} replications failed", case.case_id, config.reps));
            }
            let mean =
                if accuracies.is_empty() { f64::NAN } else { accuracies.iter().sum::<f64>() / accuracies.len() as f64 };
            rows.push(BenchRow {
                case_id: case.case_id,
                method,
                mean_accuracy: mean,
                sd_across_reps: sample_sd(&accuracies),
                reps: accuracies.len(),
                failures,
                accuracies,
            });
        }
    }
    Ok(BenchmarkReport { config: config.clone(), rows, warnings, runtime_secs })
}
