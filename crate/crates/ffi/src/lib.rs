//! C interface to the biconvex toolkit.
//!
//! Problems are parsed from the textual problem language and held behind
//! opaque handles. Every fallible function returns a [`BcxCode`]; on failure a
//! message is available from `bcx_last_error` on the same thread. Strings
//! returned through out-parameters belong to the caller and are released with
//! `bcx_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use biconvex::acs::solve_acs;
use biconvex::cli::{build, parse_problem, solve_report, verdict_report, Built};
use biconvex::problem::{SolveOptions, SolveReport, SolveStatus};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcxCode {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The problem text did not parse or build.
    Parse = 3,
    /// The problem is not DBCP-compliant.
    NotDbcp = 4,
    /// Invalid options or a solver failure before any report was produced.
    Solver = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

/// Final status of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcxStatus {
    Converged = 0,
    MaxIters = 1,
    SubproblemInfeasible = 2,
    SubproblemUnbounded = 3,
    NotDbcp = 4,
    SolverError = 5,
}

impl From<SolveStatus> for BcxStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => BcxStatus::Converged,
            SolveStatus::MaxIters => BcxStatus::MaxIters,
            SolveStatus::SubproblemInfeasible => BcxStatus::SubproblemInfeasible,
            SolveStatus::SubproblemUnbounded => BcxStatus::SubproblemUnbounded,
            SolveStatus::NotDbcp => BcxStatus::NotDbcp,
            SolveStatus::SolverError => BcxStatus::SolverError,
        }
    }
}

/// Solve options. Start from `bcx_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcxOptions {
    /// Proximal weight, nonnegative.
    pub lbd: f64,
    /// Slack penalty for problems marked `relax`.
    pub nu: f64,
    pub gap_tol: f64,
    pub max_iters: u64,
    pub seed: u64,
}

/// A parsed and verified problem.
pub struct BcxProblem {
    built: Built,
}

/// The outcome of `bcx_solve`.
pub struct BcxReport {
    report: SolveReport,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(code: BcxCode, msg: impl Into<String>) -> BcxCode {
    set_error(msg);
    code
}

/// Run `f`, turning panics into `BcxCode::Panic`.
fn guard(f: impl FnOnce() -> BcxCode) -> BcxCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => {
            if code == BcxCode::Ok {
                set_error("");
            }
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(BcxCode::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, BcxCode> {
    if p.is_null() {
        return Err(fail(BcxCode::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(BcxCode::Utf8, format!("{what} is not UTF-8: {e}")))
}

fn to_c(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message for the last failing call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn bcx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bcx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse problem text. `base_dir` resolves `@csv` paths and may be null for
/// the current directory. On success `*out` owns a new problem.
///
/// # Safety
/// `text` and a non-null `base_dir` must be nul-terminated strings; `out` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bcx_problem_from_text(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut BcxProblem,
) -> BcxCode {
    guard(|| {
        if out.is_null() {
            return fail(BcxCode::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(text, "text") {
            Ok(t) => t,
            Err(code) => return code,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match read_str(base_dir, "base_dir") {
                Ok(b) => b,
                Err(code) => return code,
            }
        };
        match parse_problem(text).and_then(|doc| build(&doc, Path::new(base))) {
            Ok(built) => {
                *out = Box::into_raw(Box::new(BcxProblem { built }));
                BcxCode::Ok
            }
            Err(e) => fail(BcxCode::Parse, e.to_string()),
        }
    })
}

/// Release a problem. Null is ignored.
///
/// # Safety
/// `problem` must come from `bcx_problem_from_text` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bcx_problem_free(problem: *mut BcxProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Write whether the problem is DBCP-compliant to `*compliant`. A non-null
/// `verdict_json` receives the verdict with source locations.
///
/// # Safety
/// `problem` must be a live handle; `compliant` must be valid for writes, as
/// must `verdict_json` when non-null.
#[no_mangle]
pub unsafe extern "C" fn bcx_check_dbcp(
    problem: *const BcxProblem,
    compliant: *mut bool,
    verdict_json: *mut *mut c_char,
) -> BcxCode {
    guard(|| {
        let (Some(p), false) = (problem.as_ref(), compliant.is_null()) else {
            return fail(BcxCode::NullPointer, "problem or compliant is null");
        };
        let verdict = p.built.problem.verdict();
        *compliant = verdict.compliant;
        if !verdict_json.is_null() {
            *verdict_json = to_c(&verdict_report(&p.built, verdict).render());
        }
        BcxCode::Ok
    })
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn bcx_options_default() -> BcxOptions {
    let d = SolveOptions::default();
    BcxOptions {
        lbd: d.lbd,
        nu: d.nu,
        gap_tol: d.gap_tolerance,
        max_iters: d.max_iters as u64,
        seed: d.seed,
    }
}

/// Solve with alternating convex search. `options` may be null for defaults.
/// A report is produced for every outcome that reaches the solver, including
/// iteration caps and subproblem failures; inspect it with
/// `bcx_report_status`.
///
/// # Safety
/// `problem` must be a live handle, `options` null or valid, and `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn bcx_solve(
    problem: *const BcxProblem,
    options: *const BcxOptions,
    out: *mut *mut BcxReport,
) -> BcxCode {
    guard(|| {
        if out.is_null() {
            return fail(BcxCode::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(p) = problem.as_ref() else {
            return fail(BcxCode::NullPointer, "problem is null");
        };
        let o = options.as_ref().copied().unwrap_or_else(|| bcx_options_default());
        let opts = SolveOptions {
            lbd: o.lbd,
            nu: o.nu,
            gap_tolerance: o.gap_tol,
            max_iters: usize::try_from(o.max_iters).unwrap_or(usize::MAX),
            seed: o.seed,
            ..SolveOptions::default()
        };
        if let Err(e) = opts.validate() {
            return fail(BcxCode::Solver, e.to_string());
        }
        let verdict = p.built.problem.verdict();
        if !verdict.compliant {
            let first = verdict.diagnostics.first().map(|d| d.to_string()).unwrap_or_default();
            return fail(BcxCode::NotDbcp, first);
        }
        let report = solve_acs(&p.built.problem, &opts);
        let json = solve_report(&p.built, &report).render();
        *out = Box::into_raw(Box::new(BcxReport { report, json }));
        BcxCode::Ok
    })
}

/// Release a report. Null is ignored.
///
/// # Safety
/// `report` must come from `bcx_solve` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bcx_report_free(report: *mut BcxReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcx_report_status(report: *const BcxReport) -> BcxStatus {
    match report.as_ref() {
        Some(r) => r.report.status.into(),
        None => BcxStatus::SolverError,
    }
}

/// Final objective; NaN for a null handle or a failed solve.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bcx_report_objective(report: *const BcxReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.objective)
}

/// Completed iterations; zero for a null handle.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bcx_report_iterations(report: *const BcxReport) -> u64 {
    report.as_ref().map_or(0, |r| r.report.iterations as u64)
}

/// The JSON report, identical to the command-line tool's output.
///
/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bcx_report_json(report: *const BcxReport, out: *mut *mut c_char) -> BcxCode {
    guard(|| match (report.as_ref(), out.is_null()) {
        (Some(r), false) => {
            *out = to_c(&r.json);
            BcxCode::Ok
        }
        _ => fail(BcxCode::NullPointer, "report or out is null"),
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn bcx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
