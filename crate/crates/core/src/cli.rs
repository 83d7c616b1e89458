//! Command-line front end. [`run`] parses arguments, executes one subcommand and
//! returns the process exit code: 0 on success, 2 for I/O failures, 3 for invalid
//! input or arguments, 4 for numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{ArEstimator, CovarianceModel, Linkage};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureOptions};
use crate::output::{self, FitOutput, FitSettings, IcReportOutput};
use crate::panel;
use crate::selection::{self, Criterion, ParamCount};
use crate::simgen::{self, ArmaSpec, BenchConfig, Method, ScenarioCase};
use crate::wmm::{self, Init, Variant, WmmConfig};
use crate::yule_walker::{assemble_armm_with, CovWeights};

#[derive(Debug, Parser)]
#[command(name = "armm", version, about = "Wishart mixture clustering of stationary time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture with a fixed number of groups and report the group AR models.
    Fit(FitArgs),
    /// Fit a range of group counts and compare them by AIC and BIC.
    Select(SelectArgs),
    /// Run the replicated accuracy benchmark on the simulation scenarios.
    Bench(BenchArgs),
    /// Write a simulated panel file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Em1,
    Em2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Em1 => Variant::Em1,
            VariantArg::Em2 => Variant::Em2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    /// Dirichlet(1) responsibilities per individual.
    Random,
    /// k-means on the sample autocorrelations.
    Kmeans,
}

impl InitArg {
    fn init(self) -> Init {
        match self {
            InitArg::Random => Init::RandomResponsibility,
            InitArg::Kmeans => Init::KmeansCorrelations,
        }
    }

    fn name(self) -> &'static str {
        match self {
            InitArg::Random => "random",
            InitArg::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParamCountArg {
    /// G * (K - 1)
    Coefficients,
    /// G * K - 1
    Literal,
}

impl From<ParamCountArg> for ParamCount {
    fn from(c: ParamCountArg) -> Self {
        match c {
            ParamCountArg::Coefficients => ParamCount::Coefficients,
            ParamCountArg::Literal => ParamCount::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LinkageArg {
    Single,
    Complete,
    Average,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    YuleWalker,
    Cls,
}

impl From<EstimatorArg> for ArEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::YuleWalker => ArEstimator::YuleWalker,
            EstimatorArg::Cls => ArEstimator::ConditionalLeastSquares,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovarianceArg {
    Full,
    Tied,
}

impl From<CovarianceArg> for CovarianceModel {
    fn from(c: CovarianceArg) -> Self {
        match c {
            CovarianceArg::Full => CovarianceModel::Full,
            CovarianceArg::Tied => CovarianceModel::Tied,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Number of AR lags; the scatter window is lags + 1.
    #[arg(long, default_value_t = 2)]
    pub lags: usize,
    #[arg(long, value_enum, default_value = "em1")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use autocorrelation scatter matrices, ignoring innovation variances.
    #[arg(long)]
    pub normalized: bool,
    #[arg(long, value_enum, default_value = "random")]
    pub init: InitArg,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Upper bound for the degrees-of-freedom scale (em2 only).
    #[arg(long, default_value_t = 1.0)]
    pub lambda_upper: f64,
}

impl ModelArgs {
    fn window(&self) -> usize {
        self.lags + 1
    }

    fn config(&self, groups: usize) -> WmmConfig {
        WmmConfig {
            variant: self.variant.into(),
            max_iter: self.max_iter,
            tol: self.tol,
            lambda_upper: self.lambda_upper,
            n_restarts: self.restarts,
            seed: self.seed,
            init: self.init.init(),
            ..WmmConfig::new(groups, self.window())
        }
    }

    fn feature_options(&self) -> FeatureOptions {
        FeatureOptions { normalized: self.normalized, ..FeatureOptions::new(self.window()) }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV with header `id,t,value`.
    pub panel: PathBuf,
    #[arg(long, short = 'g')]
    pub groups: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Start from an `id,group` CSV, or from the responsibilities of a previous fit document.
    #[arg(long)]
    pub init_labels: Option<PathBuf>,
    /// Weight the coefficient covariance by MAP labels instead of responsibilities.
    #[arg(long)]
    pub hard_cov: bool,
    #[arg(long, value_enum, default_value = "aic")]
    pub lag_criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "coefficients")]
    pub param_count: ParamCountArg,
    /// Output JSON path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Also write MAP labels as an `id,group` CSV.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    pub panel: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub gmin: usize,
    #[arg(long, default_value_t = 10)]
    pub gmax: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "bic")]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "coefficients")]
    pub param_count: ParamCountArg,
    /// Output JSON path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Write the `G,BIC,AIC` table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario ids, e.g. `1,3,5` or `1-6`.
    #[arg(long, default_value = "1-6", value_parser = parse_cases)]
    pub cases: CaseList,
    #[arg(long, value_delimiter = ',', default_value = "acf,pacf,pic,gmm,em1,em2")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2)]
    pub lags: usize,
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value = "complete")]
    pub linkage: LinkageArg,
    #[arg(long, value_enum, default_value = "yule-walker")]
    pub estimator: EstimatorArg,
    #[arg(long, value_enum, default_value = "full")]
    pub gmm_covariance: CovarianceArg,
    /// Table CSV path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Metadata JSON path (configuration, per-replication accuracies, failures).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseList(pub Vec<usize>);

fn parse_cases(s: &str) -> std::result::Result<CaseList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bounds = part.split_once("..").or_else(|| part.split_once('-'));
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("invalid case `{x}`"));
        match bounds {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b.trim_start_matches('=')).map_err(|e| e.to_string())?);
                if a > b {
                    return Err(format!("empty case range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no cases given".into());
    }
    Ok(CaseList(out))
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["case", "spec"])))]
pub struct SimulateArgs {
    #[arg(long)]
    pub case: Option<usize>,
    /// JSON list of ARMA specifications (`phi`, `theta`, `sigma2`, `n`, `count`, `group`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Also write the true labels as an `id,group` CSV.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Io<'_> {
    fn emit(&mut self, path: Option<&Path>, bytes: &[u8]) -> Result<()> {
        match path {
            Some(p) => std::fs::write(p, bytes).map_err(|e| io_error(p, e)),
            None => self.stdout.write_all(bytes).map_err(|e| io_error(Path::new("<stdout>"), e)),
        }
    }

    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.stderr, "warning: {msg}");
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// A previous fit document restarts from its responsibilities; an `id,group` CSV from hard labels.
fn read_init(path: &Path, ids: &[String]) -> Result<Init> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if !text.trim_start().starts_with('{') {
        return panel::read_labels_from(text.as_bytes(), ids).map(Init::ProvidedLabels);
    }
    let doc: FitOutput =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
    let rows: std::collections::HashMap<&str, &Vec<f64>> = doc.labels.iter().map(|l| (l.id.as_str(), &l.z)).collect();
    ids.iter()
        .map(|id| {
            rows.get(id.as_str())
                .map(|z| z.to_vec())
                .ok_or_else(|| Error::Config(format!("no responsibilities for `{id}`")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Init::ProvidedResponsibilities)
}

fn cmd_fit(args: &FitArgs, io: &mut Io) -> Result<()> {
    let data = panel::read_panel(&args.panel)?;
    let features = extract_features(&data, &args.model.feature_options())?;
    let mut config = args.model.config(args.groups);
    let mut init_name = args.model.init.name().to_string();
    if let Some(p) = &args.init_labels {
        let ids: Vec<String> = features.iter().map(|f| f.id.clone()).collect();
        config.init = read_init(p, &ids)?;
        init_name = match config.init {
            Init::ProvidedResponsibilities(_) => "responsibilities".into(),
            _ => "labels".into(),
        };
    }
    let fit = wmm::fit(&features, &config)?;
    let weights = if args.hard_cov { CovWeights::Hard } else { CovWeights::Soft };
    let model = assemble_armm_with(&fit, &features, weights)?;
    let ic = selection::group_ic_with(&fit, &features, args.param_count.into())?;
    let lags = selection::select_lag_per_group(&fit, &features, args.lag_criterion.into())?;
    if !fit.converged {
        io.warn(format!("EM stopped after {} iterations without converging", fit.iters));
    }
    if fit.failed_restarts > 0 {
        io.warn(format!("{} of {} restarts failed", fit.failed_restarts, config.n_restarts));
    }
    for g in model.groups.iter().filter(|g| !g.stationary) {
        io.warn(format!("group {} has a non-stationary AR fit", g.group + 1));
    }
    let settings = FitSettings {
        groups: args.groups,
        lags: args.model.lags,
        variant: config.variant,
        restarts: config.n_restarts,
        init: init_name,
        normalized: args.model.normalized,
        max_iter: config.max_iter,
        tol: config.tol,
        lambda_upper: config.lambda_upper,
    };
    let doc = FitOutput::new(config.seed, settings, &fit, &model, ic, Some(&lags));
    let mut json = output::to_json(&doc)?;
    json.push('\n');
    io.emit(args.out.as_deref(), json.as_bytes())?;
    if let Some(p) = &args.labels_out {
        let mut buf = Vec::new();
        panel::write_labels_to(&mut buf, &model.ids, &model.labels).map_err(|e| io_error(p, e))?;
        io.emit(Some(p), &buf)?;
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs, io: &mut Io) -> Result<()> {
    if args.gmin == 0 || args.gmin > args.gmax {
        return Err(Error::Config(format!("invalid group range {}..={}", args.gmin, args.gmax)));
    }
    let data = panel::read_panel(&args.panel)?;
    let features = extract_features(&data, &args.model.feature_options())?;
    let range: Vec<usize> = (args.gmin..=args.gmax).collect();
    let base = args.model.config(args.gmin);
    let report = selection::select_groups(&features, &range, &base, args.param_count.into())?;
    for c in report.candidates.iter().filter(|c| c.error.is_some()) {
        io.warn(format!("G = {} failed: {}", c.groups, c.error.as_ref().map(ToString::to_string).unwrap_or_default()));
    }
    let criterion: Criterion = args.criterion.into();
    let doc =
        IcReportOutput::new(&report, base.seed, args.model.lags, base.variant, criterion, args.param_count.into());
    let mut json = output::to_json(&doc)?;
    json.push('\n');
    io.emit(args.out.as_deref(), json.as_bytes())?;
    if let Some(p) = &args.table {
        let mut buf = Vec::new();
        output::write_ic_table(&mut buf, &report).map_err(|e| io_error(p, e))?;
        io.emit(Some(p), &buf)?;
    }
    if report.selected(criterion).is_none() {
        return Err(Error::Numerical("no candidate group count could be fitted".into()));
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, io: &mut Io) -> Result<()> {
    let methods = args.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>()?;
    let config = BenchConfig {
        window: args.lags + 1,
        groups: args.groups,
        restarts: args.restarts,
        init: args.init.init(),
        linkage: args.linkage.into(),
        estimator: args.estimator.into(),
        gmm_covariance: args.gmm_covariance.into(),
        ..BenchConfig::new(args.cases.0.clone(), methods, args.reps, args.seed)
    };
    let report = simgen::run_benchmark(&config)?;
    for w in &report.warnings {
        io.warn(w);
    }
    for (case, secs) in &report.runtime_secs {
        let _ = writeln!(io.stderr, "case {case}: {secs:.1}s");
    }
    let mut table = Vec::new();
    output::write_bench_table(&mut table, &report).map_err(|e| io_error(Path::new("<table>"), e))?;
    io.emit(args.out.as_deref(), &table)?;
    if let Some(p) = &args.meta {
        let mut json = output::to_json(&report)?;
        json.push('\n');
        io.emit(Some(p), json.as_bytes())?;
    }
    Ok(())
}

fn read_spec(path: &Path) -> Result<ScenarioCase> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let parse_err = |e: serde_json::Error| Error::Parse { line: e.line() as u64, message: e.to_string() };
    let specs: Vec<ArmaSpec> = if text.trim_start().starts_with('{') {
        serde_json::from_str::<ScenarioCase>(&text).map_err(parse_err)?.specs
    } else {
        serde_json::from_str(&text).map_err(parse_err)?
    };
    if specs.is_empty() {
        return Err(Error::Config("specification list is empty".into()));
    }
    Ok(ScenarioCase { case_id: 0, specs })
}

fn cmd_simulate(args: &SimulateArgs, io: &mut Io) -> Result<()> {
    let case = match (&args.case, &args.spec) {
        (Some(id), _) => simgen::scenario(*id)?,
        (None, Some(p)) => read_spec(p)?,
        (None, None) => return Err(Error::Config("either --case or --spec is required".into())),
    };
    let (data, truth) = simgen::simulate_panel(&case, args.seed)?;
    panel::write_panel(&args.out, &data)?;
    if let Some(p) = &args.labels {
        let ids: Vec<String> = data.iter().map(|s| s.id.clone()).collect();
        let mut buf = Vec::new();
        panel::write_labels_to(&mut buf, &ids, &truth).map_err(|e| io_error(p, e))?;
        io.emit(Some(p), &buf)?;
    }
    Ok(())
}

/// Sizes the global worker pool from `ARMM_THREADS` (unset or 0 leaves the default).
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("ARMM_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().map_err(|_| Error::Config(format!("ARMM_THREADS must be an integer, got `{raw}`")))?;
    if n > 0 {
        // A pool that already exists keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    3
                }
            };
        }
    };
    let mut io = Io { stdout, stderr };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Fit(a) => cmd_fit(a, &mut io),
        Command::Select(a) => cmd_select(a, &mut io),
        Command::Bench(a) => cmd_bench(a, &mut io),
        Command::Simulate(a) => cmd_simulate(a, &mut io),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            e.exit_code()
        }
    }
}
