//! C ABI over `kg_audit`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`KgStatus`]; on failure, [`kg_last_error`] describes the problem for the
//! calling thread. Strings returned through `char **` out-parameters belong
//! to the caller and must be released with [`kg_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kg_audit::audit::{run_audit, AuditConfig, AuditError, AuditReport, RedundancyCode, ReverseDuplicatePolicy};
use kg_audit::baselines::{build_intersection_rules, CartesianPredictor, FrequencyPredictor, RulePredictor};
use kg_audit::eval::{aggregate, write_rankings, EvalError, Evaluation, Evaluator, FilterScope, DEFAULT_HITS};
use kg_audit::store::{load_dataset, Dataset, SplitSet, StoreError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    Evaluation = 6,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgPredictor {
    Rule = 0,
    Cartesian = 1,
    Frequency = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgFilterScope {
    All = 0,
    TrainTest = 1,
}

impl From<KgFilterScope> for FilterScope {
    fn from(s: KgFilterScope) -> Self {
        match s {
            KgFilterScope::All => FilterScope::All,
            KgFilterScope::TrainTest => FilterScope::TrainTest,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KgStats {
    pub entities: u64,
    pub relations: u64,
    pub train: u64,
    pub valid: u64,
    pub test: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgAuditConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub cartesian_threshold: f64,
    pub category_cutoff: f64,
    pub min_triples: u64,
}

impl From<&KgAuditConfig> for AuditConfig {
    fn from(c: &KgAuditConfig) -> Self {
        AuditConfig {
            theta1: c.theta1,
            theta2: c.theta2,
            cartesian_threshold: c.cartesian_threshold,
            category_cutoff: c.category_cutoff,
            min_triples: c.min_triples as usize,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KgMetrics {
    pub count: u64,
    pub mr: f64,
    pub fmr: f64,
    pub mrr: f64,
    pub fmrr: f64,
}

/// A loaded dataset.
pub struct KgDataset(Dataset);

/// The outcome of an audit.
pub struct KgAudit {
    report: AuditReport,
    json: String,
}

/// Per-query ranks from an evaluation or an ingested rankings file.
pub struct KgReport(Evaluation);

struct Failure {
    status: KgStatus,
    message: String,
}

impl Failure {
    fn new(status: KgStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::MissingFile(_) | StoreError::Io { .. } => KgStatus::Io,
            _ => KgStatus::Parse,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        Failure::new(KgStatus::InvalidConfig, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::Io { .. } => KgStatus::Io,
            EvalError::Malformed { .. } => KgStatus::Parse,
            EvalError::InvalidCutoff => KgStatus::InvalidConfig,
            _ => KgStatus::Evaluation,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KgStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_last_error(&format!("panic: {msg}"));
            KgStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(KgStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(KgStatus::NullArgument, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::new(KgStatus::NullArgument, format!("{what} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(KgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn audit_config(config: *const KgAuditConfig) -> AuditConfig {
    // SAFETY: callers pass null or a valid pointer
    unsafe { config.as_ref() }.map(AuditConfig::from).unwrap_or_default()
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn kg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn kg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The default detection thresholds.
#[no_mangle]
pub extern "C" fn kg_audit_config_default() -> KgAuditConfig {
    let c = AuditConfig::default();
    KgAuditConfig {
        theta1: c.theta1,
        theta2: c.theta2,
        cartesian_threshold: c.cartesian_threshold,
        category_cutoff: c.category_cutoff,
        min_triples: c.min_triples as u64,
    }
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_load(dir: *const c_char, out: *mut *mut KgDataset) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let ds = load_dataset(&dir, SplitSet::TRAIN)?;
        *out = Box::into_raw(Box::new(KgDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`kg_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_free(ds: *mut KgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_stats(ds: *const KgDataset, out: *mut KgStats) -> KgStatus {
    guard(|| {
        let ds = &borrow(ds, "ds")?.0;
        let s = ds.stats();
        *out_ptr(out, "out")? = KgStats {
            entities: s.entities as u64,
            relations: s.relations as u64,
            train: s.train as u64,
            valid: s.valid as u64,
            test: s.test as u64,
        };
        Ok(())
    })
}

/// Runs the redundancy audit. `config` may be null for the defaults.
///
/// # Safety
/// `ds` must be a live handle, `config` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_audit_run(
    ds: *const KgDataset,
    config: *const KgAuditConfig,
    out: *mut *mut KgAudit,
) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = &borrow(ds, "ds")?.0;
        let report = run_audit(ds, &audit_config(config), ReverseDuplicatePolicy::default())?;
        let records: Vec<_> = report.all_findings().iter().map(|f| f.to_record(ds)).collect();
        let histogram: std::collections::BTreeMap<String, usize> =
            report.histogram.iter().map(|(c, n)| (c.to_string(), *n)).collect();
        let json = serde_json::json!({
            "findings": records,
            "histogram": histogram,
            "leakage": report.leakage,
        })
        .to_string();
        *out = Box::into_raw(Box::new(KgAudit { report, json }));
        Ok(())
    })
}

/// # Safety
/// `audit` must be null or a handle from [`kg_audit_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_audit_free(audit: *mut KgAudit) {
    if !audit.is_null() {
        drop(Box::from_raw(audit));
    }
}

/// Number of findings of all kinds.
///
/// # Safety
/// `audit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_audit_finding_count(audit: *const KgAudit, out: *mut u64) -> KgStatus {
    guard(|| {
        let a = borrow(audit, "audit")?;
        *out_ptr(out, "out")? = a.report.all_findings().len() as u64;
        Ok(())
    })
}

/// Fills `counts[code]` with the number of test triples per 4-bit
/// redundancy code.
///
/// # Safety
/// `audit` must be a live handle and `counts` point to 16 writable values.
#[no_mangle]
pub unsafe extern "C" fn kg_audit_histogram(audit: *const KgAudit, counts: *mut u64) -> KgStatus {
    guard(|| {
        let a = borrow(audit, "audit")?;
        if counts.is_null() {
            return Err(Failure::new(KgStatus::NullArgument, "counts is null"));
        }
        let counts = std::slice::from_raw_parts_mut(counts, 16);
        counts.fill(0);
        for (code, n) in &a.report.histogram {
            counts[RedundancyCode::bits(*code) as usize] = *n as u64;
        }
        Ok(())
    })
}

/// The audit as a JSON document; free with [`kg_string_free`].
///
/// # Safety
/// `audit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_audit_json(audit: *const KgAudit, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let a = borrow(audit, "audit")?;
        *out = into_c_string(a.json.clone());
        Ok(())
    })
}

/// Ranks every test query with a baseline predictor. `config` may be null.
///
/// # Safety
/// `ds` must be a live handle, `config` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_evaluate(
    ds: *const KgDataset,
    predictor: KgPredictor,
    config: *const KgAuditConfig,
    scope: KgFilterScope,
    out: *mut *mut KgReport,
) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = &borrow(ds, "ds")?.0;
        let config = audit_config(config);
        config.validate()?;
        let evaluator = Evaluator::new(ds, scope.into(), &DEFAULT_HITS)?;
        let evaluation = match predictor {
            KgPredictor::Rule => {
                let rules = build_intersection_rules(ds, &config);
                evaluator.evaluate(&RulePredictor::new(ds, &rules))?
            }
            KgPredictor::Cartesian => {
                let report = run_audit(ds, &config, ReverseDuplicatePolicy::default())?;
                evaluator.evaluate(&CartesianPredictor::new(ds, &report.cartesian))?
            }
            KgPredictor::Frequency => evaluator.evaluate(&FrequencyPredictor::new(ds))?,
        };
        *out = Box::into_raw(Box::new(KgReport(evaluation)));
        Ok(())
    })
}

/// Reads a rankings JSONL file covering every test query.
///
/// # Safety
/// `ds` must be a live handle, `path` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_ingest_rankings(
    ds: *const KgDataset,
    path: *const c_char,
    scope: KgFilterScope,
    out: *mut *mut KgReport,
) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = &borrow(ds, "ds")?.0;
        let path = path_arg(path, "path")?;
        let evaluation = Evaluator::new(ds, scope.into(), &DEFAULT_HITS)?.ingest(&path)?;
        *out = Box::into_raw(Box::new(KgReport(evaluation)));
        Ok(())
    })
}

/// Writes the report's ranks as a rankings JSONL file.
///
/// # Safety
/// `ds` and `report` must be live handles, `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kg_report_write_rankings(
    ds: *const KgDataset,
    report: *const KgReport,
    path: *const c_char,
) -> KgStatus {
    guard(|| {
        let ds = &borrow(ds, "ds")?.0;
        let r = borrow(report, "report")?;
        let path = path_arg(path, "path")?;
        write_rankings(&path, ds, &r.0.results)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_report_free(report: *mut KgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_report_metrics(report: *const KgReport, out: *mut KgMetrics) -> KgStatus {
    guard(|| {
        let m = &borrow(report, "report")?.0.metrics;
        *out_ptr(out, "out")? = KgMetrics {
            count: m.count as u64,
            mr: m.mr,
            fmr: m.fmr,
            mrr: m.mrr,
            fmrr: m.fmrr,
        };
        Ok(())
    })
}

/// Raw and filtered hits@k, in percent, for any positive `k`.
///
/// # Safety
/// `report` must be a live handle; `raw` and `filtered` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_report_hits(
    report: *const KgReport,
    k: u32,
    raw: *mut f64,
    filtered: *mut f64,
) -> KgStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        if k == 0 {
            return Err(Failure::new(KgStatus::InvalidConfig, "k must be positive"));
        }
        let raw = out_ptr(raw, "raw")?;
        let filtered = out_ptr(filtered, "filtered")?;
        let m = aggregate(&r.0.results, &[k]);
        *raw = m.hits[&k];
        *filtered = m.fhits[&k];
        Ok(())
    })
}

/// Overall metrics as JSON; free with [`kg_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_report_json(report: *const KgReport, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let r = borrow(report, "report")?;
        let json =
            serde_json::to_string(&r.0.metrics).map_err(|e| Failure::new(KgStatus::Evaluation, e.to_string()))?;
        *out = into_c_string(json);
        Ok(())
    })
}
