//! C interface to the `armm` library.
//!
//! Panels and fitted models are opaque handles created and destroyed through
//! this API. Every fallible call returns an [`ArmmStatus`]; on failure the
//! message is available from [`armm_last_error`] on the same thread.
//! Strings returned to the caller are owned by the caller and released with
//! [`armm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use armm::features::{extract_features, FeatureOptions, TimeSeries};
use armm::output::{FitOutput, FitSettings, IcReportOutput};
use armm::selection::{self, Criterion, ParamCount};
use armm::wmm::{self, Variant, WmmConfig};
use armm::yule_walker::assemble_armm;
use armm::{Error, ErrorKind};

/// Status codes. `Io`, `Validation` and `Numerical` share their values with
/// the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmmStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Validation = 3,
    Numerical = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmmVariant {
    Em1 = 0,
    Em2 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ArmmFitOptions {
    pub groups: usize,
    pub lags: usize,
    pub variant: ArmmVariant,
    pub restarts: usize,
    pub seed: u64,
    pub normalized: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub lambda_upper: f64,
}

/// A panel of named series.
pub struct ArmmPanel {
    series: Vec<TimeSeries>,
}

/// A fitted mixture with its per-group AR models.
pub struct ArmmModel {
    doc: FitOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ArmmStatus, msg: impl std::fmt::Display) -> ArmmStatus {
    set_last_error(msg.to_string());
    status
}

fn from_error(e: Error) -> ArmmStatus {
    let status = match e.kind() {
        ErrorKind::Io => ArmmStatus::Io,
        ErrorKind::Validation => ArmmStatus::Validation,
        ErrorKind::Numerical => ArmmStatus::Numerical,
    };
    fail(status, e)
}

fn guard(f: impl FnOnce() -> ArmmStatus) -> ArmmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ArmmStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ArmmStatus> {
    if s.is_null() {
        return Err(fail(ArmmStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(ArmmStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn give_string(text: String, out: *mut *mut c_char) -> ArmmStatus {
    match CString::new(text) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before calling.
            unsafe { *out = c.into_raw() };
            ArmmStatus::Ok
        }
        Err(_) => fail(ArmmStatus::Numerical, "output contains a NUL byte"),
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(ArmmStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

impl ArmmFitOptions {
    fn config(&self) -> WmmConfig {
        let variant = match self.variant {
            ArmmVariant::Em1 => Variant::Em1,
            ArmmVariant::Em2 => Variant::Em2,
        };
        WmmConfig {
            variant,
            max_iter: self.max_iter,
            tol: self.tol,
            lambda_upper: self.lambda_upper,
            n_restarts: self.restarts,
            seed: self.seed,
            ..WmmConfig::new(self.groups, self.lags + 1)
        }
    }

    fn features(&self, panel: &ArmmPanel) -> armm::Result<Vec<armm::ScatterFeature>> {
        let opts = FeatureOptions { normalized: self.normalized, ..FeatureOptions::new(self.lags + 1) };
        extract_features(&panel.series, &opts)
    }
}

/// Defaults matching the command line: 2 lags, EM1, 10 restarts, seed 0.
#[no_mangle]
pub extern "C" fn armm_fit_options_default(groups: usize) -> ArmmFitOptions {
    let base = WmmConfig::new(groups, 3);
    ArmmFitOptions {
        groups,
        lags: 2,
        variant: ArmmVariant::Em1,
        restarts: base.n_restarts,
        seed: 0,
        normalized: false,
        max_iter: base.max_iter,
        tol: base.tol,
        lambda_upper: base.lambda_upper,
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn armm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null. Free with [`armm_string_free`].
#[no_mangle]
pub extern "C" fn armm_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn armm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn armm_panel_new() -> *mut ArmmPanel {
    Box::into_raw(Box::new(ArmmPanel { series: Vec::new() }))
}

/// # Safety
/// `panel` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn armm_panel_free(panel: *mut ArmmPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Appends a copy of `values[0..len]` under `id`.
///
/// # Safety
/// `panel` must be a live handle, `id` a NUL-terminated string and `values`
/// must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn armm_panel_add_series(
    panel: *mut ArmmPanel,
    id: *const c_char,
    values: *const f64,
    len: usize,
) -> ArmmStatus {
    guard(|| {
        non_null!(panel, values);
        let id = match read_str(id) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let panel = &mut *panel;
        if panel.series.iter().any(|s| s.id == id) {
            return fail(ArmmStatus::Validation, format!("duplicate id `{id}`"));
        }
        match TimeSeries::new(id, std::slice::from_raw_parts(values, len).to_vec()) {
            Ok(s) => {
                panel.series.push(s);
                ArmmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Reads an `id,t,value` CSV file into a new panel.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn armm_panel_read_csv(path: *const c_char, out: *mut *mut ArmmPanel) -> ArmmStatus {
    guard(|| {
        non_null!(out);
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match armm::panel::read_panel(Path::new(path)) {
            Ok(series) => {
                *out = Box::into_raw(Box::new(ArmmPanel { series }));
                ArmmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Simulates one of the built-in benchmark scenarios (1 to 6).
///
/// # Safety
/// `out` must be a writable pointer; `truth` must be null or point to room
/// for one label per individual of the scenario.
#[no_mangle]
pub unsafe extern "C" fn armm_simulate_case(
    case_id: usize,
    seed: u64,
    out: *mut *mut ArmmPanel,
    truth: *mut usize,
) -> ArmmStatus {
    guard(|| {
        non_null!(out);
        let result = armm::simgen::scenario(case_id).and_then(|c| armm::simgen::simulate_panel(&c, seed));
        match result {
            Ok((series, labels)) => {
                if !truth.is_null() {
                    std::slice::from_raw_parts_mut(truth, labels.len()).copy_from_slice(&labels);
                }
                *out = Box::into_raw(Box::new(ArmmPanel { series }));
                ArmmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of series in the panel, 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn armm_panel_len(panel: *const ArmmPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.series.len())
}

/// Fits the mixture and the per-group AR models.
///
/// # Safety
/// `panel` must be a live handle, `options` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn armm_fit(
    panel: *const ArmmPanel,
    options: *const ArmmFitOptions,
    out: *mut *mut ArmmModel,
) -> ArmmStatus {
    guard(|| {
        non_null!(panel, options, out);
        let (panel, options) = (&*panel, &*options);
        let config = options.config();
        let result = (|| {
            let features = options.features(panel)?;
            let fit = wmm::fit(&features, &config)?;
            let model = assemble_armm(&fit, &features)?;
            let ic = selection::group_ic(&fit, &features)?;
            let lags = selection::select_lag_per_group(&fit, &features, Criterion::Aic)?;
            let settings = FitSettings {
                groups: options.groups,
                lags: options.lags,
                variant: config.variant,
                restarts: config.n_restarts,
                init: "random".into(),
                normalized: options.normalized,
                max_iter: config.max_iter,
                tol: config.tol,
                lambda_upper: config.lambda_upper,
            };
            Ok(FitOutput::new(config.seed, settings, &fit, &model, ic, Some(&lags)))
        })();
        match result {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(ArmmModel { doc }));
                ArmmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn armm_model_free(model: *mut ArmmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn armm_model_groups(model: *const ArmmModel) -> usize {
    model.as_ref().map_or(0, |m| m.doc.groups.len())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn armm_model_individuals(model: *const ArmmModel) -> usize {
    model.as_ref().map_or(0, |m| m.doc.labels.len())
}

/// Final observed log-likelihood, NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn armm_model_loglik(model: *const ArmmModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.doc.loglik)
}

/// Writes 0-based MAP labels in panel order; `len` must equal the number of individuals.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn armm_model_labels(model: *const ArmmModel, out: *mut usize, len: usize) -> ArmmStatus {
    guard(|| {
        non_null!(model, out);
        let model = &*model;
        let labels = model.doc.zero_based_labels();
        if len != labels.len() {
            return fail(ArmmStatus::Validation, format!("buffer holds {len} labels, model has {}", labels.len()));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&labels);
        ArmmStatus::Ok
    })
}

/// Writes the AR coefficients of 0-based `group`; `len` must equal the number of lags.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn armm_model_coefficients(
    model: *const ArmmModel,
    group: usize,
    out: *mut f64,
    len: usize,
) -> ArmmStatus {
    guard(|| {
        non_null!(model, out);
        let model = &*model;
        let Some(g) = model.doc.groups.get(group) else {
            return fail(ArmmStatus::Validation, format!("group {group} out of range"));
        };
        if len != g.phi.len() {
            return fail(ArmmStatus::Validation, format!("buffer holds {len} coefficients, group has {}", g.phi.len()));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&g.phi);
        ArmmStatus::Ok
    })
}

/// The fit document as JSON, identical to `armm fit` output.
///
/// # Safety
/// `model` must be a live handle and `out` writable. Free the result with [`armm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn armm_model_to_json(model: *const ArmmModel, out: *mut *mut c_char) -> ArmmStatus {
    guard(|| {
        non_null!(model, out);
        let model = &*model;
        match armm::output::to_json(&model.doc) {
            Ok(s) => give_string(s, out),
            Err(e) => from_error(e),
        }
    })
}

/// Fits every G in `gmin..=gmax` and returns the AIC/BIC report as JSON.
/// `options->groups` is ignored.
///
/// # Safety
/// `panel` must be a live handle, `options` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn armm_select_json(
    panel: *const ArmmPanel,
    options: *const ArmmFitOptions,
    gmin: usize,
    gmax: usize,
    out: *mut *mut c_char,
) -> ArmmStatus {
    guard(|| {
        non_null!(panel, options, out);
        if gmin == 0 || gmin > gmax {
            return fail(ArmmStatus::Validation, format!("invalid group range {gmin}..={gmax}"));
        }
        let (panel, options) = (&*panel, &*options);
        let base = ArmmFitOptions { groups: gmin, ..*options }.config();
        let range: Vec<usize> = (gmin..=gmax).collect();
        let result = options.features(panel).and_then(|features| {
            let report = selection::select_groups(&features, &range, &base, ParamCount::Coefficients)?;
            let doc = IcReportOutput::new(
                &report,
                base.seed,
                options.lags,
                base.variant,
                Criterion::Bic,
                ParamCount::Coefficients,
            );
            armm::output::to_json(&doc)
        });
        match result {
            Ok(s) => give_string(s, out),
            Err(e) => from_error(e),
        }
    })
}
