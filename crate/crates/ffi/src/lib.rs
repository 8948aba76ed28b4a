//! C interface to the insecscan analyzer.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns an
//! [`InsecscanStatus`]; the message describing the most recent failure on
//! the calling thread is available from [`insecscan_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use insecscan::cli::{analyze_source, CliError, Config, Report};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsecscanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    ParseError = 4,
    IoError = 5,
    Panic = 6,
}

/// Analysis settings.
pub struct InsecscanConfig(Config);

/// Result of one analysis.
pub struct InsecscanReport(Report);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: InsecscanStatus, msg: impl Into<String>) -> InsecscanStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> InsecscanStatus) -> InsecscanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(InsecscanStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, InsecscanStatus> {
    if p.is_null() {
        return Err(fail(InsecscanStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(InsecscanStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn insecscan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A configuration with default settings.
#[no_mangle]
pub extern "C" fn insecscan_config_new() -> *mut InsecscanConfig {
    Box::into_raw(Box::new(InsecscanConfig(Config::default())))
}

/// # Safety
/// `cfg` must be null or a pointer from [`insecscan_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn insecscan_config_free(cfg: *mut InsecscanConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Set one option by its configuration-file key, e.g. `engine` to
/// `relational` or `ct` to `true`.
///
/// # Safety
/// `cfg` must be a live config handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn insecscan_config_set(
    cfg: *mut InsecscanConfig,
    key: *const c_char,
    value: *const c_char,
) -> InsecscanStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(InsecscanStatus::NullPointer, "config is null");
        };
        let (key, value) = match (text(key, "key"), text(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mut next = cfg.0.clone();
        match next.set(key, value) {
            Ok(()) => {
                cfg.0 = next;
                InsecscanStatus::Ok
            }
            Err(e) => fail(InsecscanStatus::InvalidConfig, format!("{key}: {e}")),
        }
    })
}

/// Replace all settings with those of a TOML document.
///
/// # Safety
/// `cfg` must be a live config handle; `toml` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn insecscan_config_load_toml(cfg: *mut InsecscanConfig, toml: *const c_char) -> InsecscanStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(InsecscanStatus::NullPointer, "config is null");
        };
        let doc = match text(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Config::from_toml(doc) {
            Ok(c) => {
                cfg.0 = c;
                InsecscanStatus::Ok
            }
            Err(e) => fail(InsecscanStatus::InvalidConfig, e),
        }
    })
}

/// Analyse `source`, naming it `file_name` in the report. On success
/// `*out` receives a report handle.
///
/// # Safety
/// `cfg` must be a live config handle, `source` and `file_name`
/// NUL-terminated strings and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn insecscan_analyze(
    cfg: *const InsecscanConfig,
    source: *const c_char,
    file_name: *const c_char,
    out: *mut *mut InsecscanReport,
) -> InsecscanStatus {
    guarded(|| {
        if out.is_null() {
            return fail(InsecscanStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(cfg) = cfg.as_ref() else {
            return fail(InsecscanStatus::NullPointer, "config is null");
        };
        let (src, name) = match (text(source, "source"), text(file_name, "file_name")) {
            (Ok(s), Ok(n)) => (s, n),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match analyze_source(src, name, &cfg.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(InsecscanReport(r)));
                InsecscanStatus::Ok
            }
            Err(e) => {
                let status = match &e {
                    CliError::Io { .. } => InsecscanStatus::IoError,
                    CliError::Parse { .. } => InsecscanStatus::ParseError,
                    CliError::Config(_) | CliError::Lattice(_) => InsecscanStatus::InvalidConfig,
                };
                fail(status, e.to_string())
            }
        }
    })
}

/// Number of findings, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn insecscan_report_finding_count(report: *const InsecscanReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.findings.len())
}

/// Exit code the command-line tool would use: 0 clean, 1 findings,
/// 2 refuted by the oracle. Returns 2 for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn insecscan_report_exit_code(report: *const InsecscanReport) -> i32 {
    report.as_ref().map_or(2, |r| r.0.exit_code())
}

/// The report as JSON. Release with [`insecscan_string_free`].
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn insecscan_report_json(report: *const InsecscanReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("report is null");
        return ptr::null_mut();
    };
    CString::new(r.0.to_json()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn insecscan_report_free(report: *mut InsecscanReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn insecscan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
