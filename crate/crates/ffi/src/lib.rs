//! C ABI over the cslow pipeline.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `_free`. Every fallible call returns a `CslowStatus` and leaves
//! a message retrievable with `cslow_last_error` on the calling thread.

use cslow::cli::{check_outcome, load_design, run_csr, CliError, CsrOutcome, Design, Settings};
use cslow::emit::Fault;
use cslow::timing::{longest_paths, CostTable};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CslowStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A string argument was not UTF-8.
    InvalidUtf8 = 2,
    /// The design or options were rejected.
    UserError = 3,
    Internal = 4,
    Panic = 5,
}

/// A parsed and elaborated design.
pub struct CslowDesign {
    design: Design,
}

/// A rewritten design with its schedule and cut report.
pub struct CslowResult {
    outcome: CsrOutcome,
    settings: Settings,
    verilog: CString,
    schedule: CString,
    report: CString,
}

/// Options for `cslow_csr`. Obtain defaults from `cslow_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CslowOptions {
    pub cmf: u32,
    pub align_outputs: bool,
    pub tie_clocks: bool,
    pub sp_delay: bool,
    pub warmup_gate: bool,
    pub seed: u64,
    pub cycles: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: CslowStatus, msg: impl AsRef<str>) -> CslowStatus {
    set_error(msg.as_ref());
    status
}

fn from_cli(e: CliError) -> CslowStatus {
    match e {
        CliError::User(m) => fail(CslowStatus::UserError, m),
        CliError::Internal(m) => fail(CslowStatus::Internal, m),
    }
}

fn guarded(f: impl FnOnce() -> CslowStatus) -> CslowStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let m = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(CslowStatus::Panic, m)
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, CslowStatus> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| fail(CslowStatus::InvalidUtf8, "argument is not UTF-8"))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cslow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn cslow_options_default() -> CslowOptions {
    let s = Settings::default();
    CslowOptions {
        cmf: s.cmf,
        align_outputs: s.align_outputs,
        tie_clocks: s.tie_clocks,
        sp_delay: s.sp_delay,
        warmup_gate: s.warmup_gate,
        seed: s.seed,
        cycles: s.cycles as u64,
    }
}

/// Load a design from one Verilog file. `top` may be null to infer it.
///
/// # Safety
/// `path` and `top` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslow_design_load(
    path: *const c_char,
    top: *const c_char,
    out: *mut *mut CslowDesign,
) -> CslowStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CslowStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match opt_str(path) {
            Ok(Some(p)) => p,
            Ok(None) => return fail(CslowStatus::NullArgument, "path is null"),
            Err(s) => return s,
        };
        let top = match opt_str(top) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_design(&[PathBuf::from(path)], top, CostTable::default()) {
            Ok(design) => {
                *out = Box::into_raw(Box::new(CslowDesign { design }));
                CslowStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}

/// # Safety
/// `d` must be null or a handle from `cslow_design_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslow_design_free(d: *mut CslowDesign) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Longest register-to-register path in the cost table's units.
///
/// # Safety
/// `d` must be a live design handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslow_design_t2ild(d: *const CslowDesign, out: *mut u64) -> CslowStatus {
    guarded(|| {
        let (Some(d), false) = (d.as_ref(), out.is_null()) else {
            return fail(CslowStatus::NullArgument, "null handle or output");
        };
        match longest_paths(&d.design.graph) {
            Ok(r) => {
                *out = r.t_2ild as u64;
                CslowStatus::Ok
            }
            Err(e) => fail(CslowStatus::Internal, e.to_string()),
        }
    })
}

fn settings(o: &CslowOptions) -> Settings {
    Settings {
        cmf: o.cmf,
        align_outputs: o.align_outputs,
        tie_clocks: o.tie_clocks,
        sp_delay: o.sp_delay,
        warmup_gate: o.warmup_gate,
        seed: o.seed,
        cycles: o.cycles as usize,
        ..Settings::default()
    }
}

/// Rewrite a design. `fault` names a register to sabotage (`name` or
/// `name:bit`) and is normally null.
///
/// # Safety
/// `d` must be a live design handle, `opts` readable, `fault` null or
/// NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cslow_csr(
    d: *const CslowDesign,
    opts: *const CslowOptions,
    fault: *const c_char,
    out: *mut *mut CslowResult,
) -> CslowStatus {
    guarded(|| {
        let (Some(d), Some(opts), false) = (d.as_ref(), opts.as_ref(), out.is_null()) else {
            return fail(CslowStatus::NullArgument, "null handle, options or output");
        };
        *out = ptr::null_mut();
        let fault: Option<Fault> = match opt_str(fault) {
            Ok(None) => None,
            Ok(Some(f)) => match f.parse() {
                Ok(f) => Some(f),
                Err(e) => return fail(CslowStatus::UserError, e),
            },
            Err(s) => return s,
        };
        let s = settings(opts);
        let outcome = match run_csr(&d.design, &s, fault) {
            Ok(o) => o,
            Err(e) => return from_cli(e),
        };
        let report = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
        let text = |t: &str| CString::new(t).expect("no NUL in generated text");
        *out = Box::into_raw(Box::new(CslowResult {
            verilog: text(&outcome.verilog),
            schedule: text(&outcome.schedule.to_json()),
            report: text(&report),
            outcome,
            settings: s,
        }));
        CslowStatus::Ok
    })
}

/// # Safety
/// `r` must be null or a handle from `cslow_csr` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslow_result_free(r: *mut CslowResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Emitted Verilog; owned by the result.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cslow_result_verilog(r: *const CslowResult) -> *const c_char {
    r.as_ref().map_or(ptr::null(), |r| r.verilog.as_ptr())
}

/// Schedule JSON; owned by the result.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cslow_result_schedule_json(r: *const CslowResult) -> *const c_char {
    r.as_ref().map_or(ptr::null(), |r| r.schedule.as_ptr())
}

/// Cut report JSON; owned by the result.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cslow_result_report_json(r: *const CslowResult) -> *const c_char {
    r.as_ref().map_or(ptr::null(), |r| r.report.as_ptr())
}

/// Total pipeline register bits the rewrite inserted.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cslow_result_register_bits(r: *const CslowResult) -> u64 {
    r.as_ref().map_or(0, |r| r.outcome.report.sp_register_bits)
}

/// Simulate the rewrite against the original with the seed and cycle count
/// given to `cslow_csr`. Writes 1 to `pass` when every thread matches.
///
/// # Safety
/// `d` must be the design `r` was produced from; `pass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslow_check(d: *const CslowDesign, r: *const CslowResult, pass: *mut i32) -> CslowStatus {
    guarded(|| {
        let (Some(d), Some(r), false) = (d.as_ref(), r.as_ref(), pass.is_null()) else {
            return fail(CslowStatus::NullArgument, "null handle or output");
        };
        match check_outcome(&d.design, &r.settings, &r.outcome) {
            Ok((v, _, _)) => {
                *pass = v.pass as i32;
                if !v.pass {
                    set_error(&serde_json::to_string(&v.witness).unwrap_or_default());
                }
                CslowStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}
