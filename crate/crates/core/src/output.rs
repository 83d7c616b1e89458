//! Machine-readable documents: JSON for structures, CSV for tables.
//! Floats are written in their shortest exact representation, so every document
//! parses back to the same values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::selection::{Criterion, IcReport, IcValues, ParamCount};
use crate::simgen::BenchmarkReport;
use crate::wmm::{Variant, WmmFit};
use crate::yule_walker::ArMixtureModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Default for Software {
    fn default() -> Self {
        Software { name: "armm".into(), version: crate::VERSION.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub groups: usize,
    pub lags: usize,
    pub variant: Variant,
    pub restarts: usize,
    pub init: String,
    pub normalized: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub lambda_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualVariance {
    pub id: String,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutput {
    /// 1-based.
    pub group: usize,
    pub members: usize,
    pub phi: Vec<f64>,
    /// `None` when the group has no weight.
    pub se: Option<Vec<f64>>,
    pub coef_cov: Option<Vec<Vec<f64>>>,
    pub kappa: f64,
    pub stationary: bool,
    pub min_root_modulus: Option<f64>,
    pub selected_lag: Option<usize>,
    pub sigma2: Vec<IndividualVariance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutput {
    pub id: String,
    /// 1-based MAP group.
    pub group: usize,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub software: Software,
    pub seed: u64,
    pub settings: FitSettings,
    pub converged: bool,
    pub iterations: usize,
    pub restart: usize,
    pub failed_restarts: usize,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub pi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub ic: IcValues,
    pub groups: Vec<GroupOutput>,
    pub labels: Vec<LabelOutput>,
}

impl FitOutput {
    pub fn new(
        seed: u64,
        settings: FitSettings,
        fit: &WmmFit,
        model: &ArMixtureModel,
        ic: IcValues,
        lags: Option<&[usize]>,
    ) -> Self {
        let groups = model
            .groups
            .iter()
            .map(|g| {
                let finite = g.coef_cov.iter().all(|v| v.is_finite());
                GroupOutput {
                    group: g.group + 1,
                    members: model.labels.iter().filter(|&&l| l == g.group).count(),
                    phi: g.phi.clone(),
                    se: finite.then(|| g.standard_errors()),
                    coef_cov: finite.then(|| g.coef_cov.row_iter().map(|r| r.iter().copied().collect()).collect()),
                    kappa: g.kappa,
                    stationary: g.stationary,
                    min_root_modulus: g.min_root_modulus.is_finite().then_some(g.min_root_modulus),
                    selected_lag: lags.and_then(|l| l.get(g.group).copied()),
                    sigma2: g
                        .sigma2_by_individual
                        .iter()
                        .map(|(id, s)| IndividualVariance { id: id.clone(), sigma2: *s })
                        .collect(),
                }
            })
            .collect();
        let labels = model
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| LabelOutput {
                id: id.clone(),
                group: model.labels[i] + 1,
                z: model.responsibilities.row(i).iter().copied().collect(),
            })
            .collect();
        FitOutput {
            software: Software::default(),
            seed,
            settings,
            converged: fit.converged,
            iterations: fit.iters,
            restart: fit.restart,
            failed_restarts: fit.failed_restarts,
            loglik: fit.loglik(),
            loglik_trace: fit.loglik_trace.clone(),
            pi: fit.pi.clone(),
            lambda: fit.lambda.clone(),
            ic,
            groups,
            labels,
        }
    }

    /// 0-based MAP labels in document order.
    pub fn zero_based_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.group - 1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutput {
    pub groups: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub r: Option<usize>,
    pub loglik: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReportOutput {
    pub software: Software,
    pub seed: u64,
    pub lags: usize,
    pub variant: Variant,
    pub criterion: Criterion,
    pub param_count: ParamCount,
    pub candidates: Vec<CandidateOutput>,
    pub selected_aic: Option<usize>,
    pub selected_bic: Option<usize>,
    pub selected: Option<usize>,
}

impl IcReportOutput {
    pub fn new(
        report: &IcReport,
        seed: u64,
        lags: usize,
        variant: Variant,
        criterion: Criterion,
        count: ParamCount,
    ) -> Self {
        IcReportOutput {
            software: Software::default(),
            seed,
            lags,
            variant,
            criterion,
            param_count: count,
            candidates: report
                .candidates
                .iter()
                .map(|c| CandidateOutput {
                    groups: c.groups,
                    aic: c.ic.map(|ic| ic.aic),
                    bic: c.ic.map(|ic| ic.bic),
                    r: c.ic.map(|ic| ic.r),
                    loglik: c.fit.as_ref().map(WmmFit::loglik),
                    converged: c.fit.as_ref().map(|f| f.converged),
                    error: c.error.as_ref().map(ToString::to_string),
                })
                .collect(),
            selected_aic: report.selected_aic,
            selected_bic: report.selected_bic,
            selected: report.selected(criterion),
        }
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `G,BIC,AIC`, one row per candidate; failed candidates have empty cells.
pub fn write_ic_table<W: Write>(w: W, report: &IcReport) -> std::io::Result<()> {
    let mut w = csv_writer(w);
    w.write_record(["G", "BIC", "AIC"])?;
    for c in &report.candidates {
        w.write_record([c.groups.to_string(), cell(c.ic.map(|i| i.bic)), cell(c.ic.map(|i| i.aic))])?;
    }
    w.flush()
}

/// One row per case with `<method>_mean` and `<method>_sd` columns in the configured method order.
pub fn write_bench_table<W: Write>(w: W, report: &BenchmarkReport) -> std::io::Result<()> {
    let mut w = csv_writer(w);
    let mut header = vec!["case".to_string()];
    for m in &report.config.methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    w.write_record(&header)?;
    for &case in &report.config.cases {
        let mut row = vec![case.to_string()];
        for &m in &report.config.methods {
            let r = report.row(case, m);
            row.push(cell(r.map(|r| r.mean_accuracy).filter(|v| v.is_finite())));
            row.push(cell(r.map(|r| r.sd_across_reps)));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| crate::Error::Numerical(format!("serialization failed: {e}")))
}
