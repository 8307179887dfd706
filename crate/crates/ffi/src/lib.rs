//! C ABI over the `spectral-mdp` solver.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`SmStatus`]; on failure [`sm_last_error`] describes the problem.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectral_mdp::harness::{
    run_gap_study, run_oracle, run_reinsurance, run_solve_inner, run_solve_outer, version_stamp,
    HarnessError, Overrides, RunReport, ScenarioFile,
};
use spectral_mdp::risk::{
    expected_shortfall, spectral_risk, DiscreteDistribution, RiskError, StepSpectrum,
};

/// Result codes. The values match the command-line exit codes where both exist.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    /// Internal or numerical failure, such as non-convergence.
    Failed = 1,
    /// Invalid input: scenario, model, distribution or argument.
    Invalid = 2,
    /// A size cap refused the computation.
    CapRefused = 3,
    /// A null pointer or non-UTF-8 string was passed.
    NullArgument = 4,
    /// The library panicked; the handle arguments are left untouched.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmCommand {
    SolveInner = 0,
    SolveOuter = 1,
    Reinsurance = 2,
    Oracle = 3,
    GapStudy = 4,
}

/// A parsed and validated scenario.
pub struct SmScenario(ScenarioFile);

/// The report of one run.
pub struct SmReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SmStatus, message: impl Into<String>) -> SmStatus {
    set_error(message.into());
    status
}

fn harness_status(e: &HarnessError) -> SmStatus {
    match e.exit_code() {
        3 => SmStatus::CapRefused,
        2 => SmStatus::Invalid,
        _ => SmStatus::Failed,
    }
}

fn guard<F: FnOnce() -> SmStatus>(f: F) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SmStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, SmStatus> {
    if p.is_null() {
        return Err(fail(SmStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SmStatus::NullArgument, "string argument is not UTF-8"))
}

unsafe fn read_slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], SmStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SmStatus::NullArgument, "null array argument"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn risk_status(e: RiskError) -> SmStatus {
    fail(SmStatus::Invalid, e.to_string())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Version stamp as a static string.
#[no_mangle]
pub extern "C" fn sm_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(version_stamp()).unwrap())
        .as_ptr()
}

/// Parses a TOML scenario.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_parse(
    toml: *const c_char,
    out: *mut *mut SmScenario,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "null output handle");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioFile::from_toml_str(text) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(SmScenario(f)));
                SmStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Reads and parses a scenario file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_load(
    path: *const c_char,
    out: *mut *mut SmScenario,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "null output handle");
        }
        let path = match read_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioFile::from_path(path) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(SmScenario(f)));
                SmStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from `sm_scenario_parse`/`sm_scenario_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_free(scenario: *mut SmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs `command` on the scenario. `seed` overrides the scenario seed when
/// `use_seed` is non-zero.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_run(
    scenario: *const SmScenario,
    command: SmCommand,
    use_seed: i32,
    seed: u64,
    out: *mut *mut SmReport,
) -> SmStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null handle");
        }
        let file = &(*scenario).0;
        let ov = Overrides {
            seed: (use_seed != 0).then_some(seed),
            ..Overrides::default()
        };
        let run = match command {
            SmCommand::SolveInner => run_solve_inner,
            SmCommand::SolveOuter => run_solve_outer,
            SmCommand::Reinsurance => run_reinsurance,
            SmCommand::Oracle => run_oracle,
            SmCommand::GapStudy => run_gap_study,
        };
        match run(file, &ov) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(SmReport(r)));
                SmStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `report` must come from `sm_run` or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_report_free(report: *mut SmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Which scalar of a report to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmField {
    InnerValue = 0,
    OuterValue = 1,
    ErrorBound = 2,
    OracleValue = 3,
    Gap = 4,
    CHat = 5,
    WallClockMs = 6,
}

/// Reads a scalar field. Fails with `Invalid` when the run did not set it.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_report_value(
    report: *const SmReport,
    field: SmField,
    out: *mut f64,
) -> SmStatus {
    guard(|| {
        if report.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null handle");
        }
        let r = &(*report).0;
        let v = match field {
            SmField::InnerValue => r.inner_value,
            SmField::OuterValue => r.outer_value,
            SmField::ErrorBound => r.error_bound,
            SmField::OracleValue => r.oracle_value,
            SmField::Gap => r.gap,
            SmField::CHat => r.c_hat,
            SmField::WallClockMs => Some(r.wall_clock_ms),
        };
        match v {
            Some(v) => {
                *out = v;
                SmStatus::Ok
            }
            None => fail(
                SmStatus::Invalid,
                format!("{field:?} is not set by this command"),
            ),
        }
    })
}

/// The report as JSON; `with_timing == 0` omits timing fields. Release the
/// string with `sm_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_report_json(
    report: *const SmReport,
    with_timing: i32,
    out: *mut *mut c_char,
) -> SmStatus {
    guard(|| {
        if report.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null handle");
        }
        let r = &(*report).0;
        let json = if with_timing != 0 {
            r.to_json()
        } else {
            r.body_json()
        };
        match json {
            Ok(s) => {
                *out = CString::new(s).expect("JSON has no nul").into_raw();
                SmStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ρ_φ of the law with `n` atoms, for the step spectrum with `k` values on
/// the `k + 1` breakpoints.
///
/// # Safety
/// Arrays must hold the stated number of elements and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sm_spectral_risk(
    atoms: *const f64,
    probs: *const f64,
    n: usize,
    breakpoints: *const f64,
    values: *const f64,
    k: usize,
    out: *mut f64,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "null output");
        }
        let (a, p, b, v) = match (
            read_slice(atoms, n),
            read_slice(probs, n),
            read_slice(breakpoints, k + 1),
            read_slice(values, k),
        ) {
            (Ok(a), Ok(p), Ok(b), Ok(v)) => (a, p, b, v),
            _ => return SmStatus::NullArgument,
        };
        let dist = match DiscreteDistribution::new(a.to_vec(), p.to_vec()) {
            Ok(d) => d,
            Err(e) => return risk_status(e),
        };
        let spec = match StepSpectrum::new(b.to_vec(), v.to_vec()) {
            Ok(s) => s,
            Err(e) => return risk_status(e),
        };
        *out = spectral_risk(&dist, &spec);
        SmStatus::Ok
    })
}

/// ES_α of the law with `n` atoms.
///
/// # Safety
/// Arrays must hold `n` elements and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sm_expected_shortfall(
    atoms: *const f64,
    probs: *const f64,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "null output");
        }
        let (a, p) = match (read_slice(atoms, n), read_slice(probs, n)) {
            (Ok(a), Ok(p)) => (a, p),
            _ => return SmStatus::NullArgument,
        };
        let result = DiscreteDistribution::new(a.to_vec(), p.to_vec())
            .and_then(|d| expected_shortfall(&d, alpha));
        match result {
            Ok(v) => {
                *out = v;
                SmStatus::Ok
            }
            Err(e) => risk_status(e),
        }
    })
}
