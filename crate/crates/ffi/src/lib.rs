//! C interface to `spinjunction`.
//!
//! Every fallible function returns an [`SjStatus`]; on failure the message is
//! kept per thread and can be read with [`sj_last_error`]. Objects are opaque
//! handles created by `sj_*_new`/`sj_*_compute` style functions and released
//! with the matching `sj_*_free`. Strings returned by the library must be
//! released with [`sj_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spinjunction::bath::{decay_rate, BathSpec, Polarization};
use spinjunction::born::CurrentTrace;
use spinjunction::pipeline::{self, Mode, RectifyMethod, ResultBundle, RunSpec};
use spinjunction::special::bessel_j0;
use spinjunction::spectral::rectification_from_means;
use spinjunction::steady::{GeneratorKind, SteadyReport};
use spinjunction::Error;

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericFailure = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Generator used by [`sj_steady_compute`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SjGenerator {
    Redfield = 0,
    Lindblad = 1,
}

/// Time-dependent method used by [`sj_trace_compute`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SjMethod {
    Born = 0,
    Kubo = 1,
    Oracle = 2,
}

/// Run configuration.
pub struct SjRunSpec(RunSpec);

/// Files and summary produced by [`sj_run`].
pub struct SjBundle(ResultBundle);

/// Steady state with diagnostics and currents.
pub struct SjSteady(SteadyReport);

/// Junction current time series.
pub struct SjTrace(CurrentTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> SjStatus {
    let status = if e.exit_code() == 2 { SjStatus::InvalidArgument } else { SjStatus::NumericFailure };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> SjStatus) -> SjStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            SjStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(format!("argument `{}` is null", stringify!($p)));
            return SjStatus::NullPointer;
        })+
    };
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SjStatus> {
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("argument `{name}` is not valid UTF-8"));
        SjStatus::InvalidArgument
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the length needed including the NUL, or 0 if
/// there is no error.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sj_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bessel function of the first kind of order zero.
#[no_mangle]
pub extern "C" fn sj_bessel_j0(x: f64) -> f64 {
    bessel_j0(x)
}

/// Decay rate of an up-polarised lead at frequency `omega` with regulator `eps`.
/// `near_singular` is set to 1 when `omega` is within `10 eps` of a band edge.
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_decay_rate(
    omega: f64,
    j: f64,
    jz: f64,
    gamma: f64,
    eps: f64,
    re: *mut f64,
    im: *mut f64,
    near_singular: *mut c_int,
) -> SjStatus {
    non_null!(re, im, near_singular);
    guard(|| {
        let spec = BathSpec::polarized(j, jz, Polarization::Up);
        match decay_rate(omega, &spec, gamma, eps) {
            Ok(r) => {
                *re = r.value.re;
                *im = r.value.im;
                *near_singular = c_int::from(r.near_singular);
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `R = (I+ - I-) / (I+ + I-)` and the diode factor.
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_rectification(plus: f64, minus: f64, r: *mut f64, diode: *mut f64) -> SjStatus {
    non_null!(r, diode);
    guard(|| match rectification_from_means(0.0, 0.0, plus, minus) {
        Ok(rep) => {
            *r = rep.r;
            *diode = rep.diode;
            SjStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Default configuration for a mode name (`"steady"`, `"born"`, ...).
///
/// # Safety
/// `mode` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_spec_new(mode: *const c_char, out: *mut *mut SjRunSpec) -> SjStatus {
    non_null!(mode, out);
    guard(|| {
        let m = match str_arg(mode, "mode") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let mode: Mode = match serde_json::from_value(serde_json::Value::String(m.to_string())) {
            Ok(m) => m,
            Err(_) => return fail(Error::Validation(vec![format!("unknown mode `{m}`")])),
        };
        *out = Box::into_raw(Box::new(SjRunSpec(RunSpec::new(mode))));
        SjStatus::Ok
    })
}

/// Parse and validate a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_spec_from_json(json: *const c_char, out: *mut *mut SjRunSpec) -> SjStatus {
    non_null!(json, out);
    guard(|| {
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match RunSpec::from_json(text).and_then(|s| s.validate().map(|_| s)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SjRunSpec(s)));
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Set a dotted `key` to `value` (parsed as JSON, else taken as a string).
/// An update that fails validation leaves the configuration unchanged.
///
/// # Safety
/// `spec` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sj_spec_set(spec: *mut SjRunSpec, key: *const c_char, value: *const c_char) -> SjStatus {
    non_null!(spec, key, value);
    guard(|| {
        let (k, v) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match (*spec).0.with_override(k, v).and_then(|s| s.validate().map(|_| s)) {
            Ok(next) => {
                (*spec).0 = next;
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Effective configuration as JSON; free with [`sj_string_free`]. Null on failure.
///
/// # Safety
/// `spec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sj_spec_to_json(spec: *const SjRunSpec) -> *mut c_char {
    if spec.is_null() {
        return ptr::null_mut();
    }
    into_c_string((*spec).0.to_json())
}

/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sj_spec_free(spec: *mut SjRunSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Run the configured pipeline, writing files below `out_dir`.
///
/// # Safety
/// `spec` must be a live handle, `out_dir` a NUL-terminated path, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_run(spec: *const SjRunSpec, out_dir: *const c_char, out: *mut *mut SjBundle) -> SjStatus {
    non_null!(spec, out_dir, out);
    guard(|| {
        let dir = match str_arg(out_dir, "out_dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match pipeline::run(&(*spec).0, Path::new(dir)) {
            Ok(b) => {
                *out = Box::into_raw(Box::new(SjBundle(b)));
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Look up a summary value of a finished run.
///
/// # Safety
/// `bundle` must be a live handle, `key` NUL-terminated, `value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_bundle_summary(bundle: *const SjBundle, key: *const c_char, value: *mut f64) -> SjStatus {
    non_null!(bundle, key, value);
    guard(|| {
        let k = match str_arg(key, "key") {
            Ok(k) => k,
            Err(s) => return s,
        };
        match (*bundle).0.summary.get(k) {
            Some(v) => {
                *value = *v;
                SjStatus::Ok
            }
            None => fail(Error::Validation(vec![format!("no summary value `{k}`")])),
        }
    })
}

/// Number of warnings raised during the run.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sj_bundle_warning_count(bundle: *const SjBundle) -> usize {
    if bundle.is_null() {
        0
    } else {
        (*bundle).0.warnings.len()
    }
}

/// The full bundle as JSON; free with [`sj_string_free`]. Null on failure.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sj_bundle_to_json(bundle: *const SjBundle) -> *mut c_char {
    if bundle.is_null() {
        return ptr::null_mut();
    }
    serde_json::to_string_pretty(&(*bundle).0).map_or(ptr::null_mut(), into_c_string)
}

/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sj_bundle_free(bundle: *mut SjBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Solve for the steady state of the configured junction.
///
/// # Safety
/// `spec` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_steady_compute(
    spec: *const SjRunSpec,
    generator: SjGenerator,
    out: *mut *mut SjSteady,
) -> SjStatus {
    non_null!(spec, out);
    guard(|| {
        let kind = match generator {
            SjGenerator::Redfield => GeneratorKind::Redfield,
            SjGenerator::Lindblad => GeneratorKind::Lindblad,
        };
        match pipeline::steady_for(&(*spec).0, kind) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(SjSteady(r)));
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Steady currents: into the left spin, into the right spin, and their half difference.
///
/// # Safety
/// `steady` must be a live handle; output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_steady_currents(
    steady: *const SjSteady,
    left: *mut f64,
    right: *mut f64,
    total: *mut f64,
) -> SjStatus {
    non_null!(steady, left, right, total);
    guard(|| match &(*steady).0.currents {
        Some(c) => {
            *left = c.left;
            *right = c.right;
            *total = c.total;
            SjStatus::Ok
        }
        None => fail(Error::Validation(vec!["steady state carries no currents".into()])),
    })
}

/// Residual, trace error and minimum eigenvalue of the steady state.
///
/// # Safety
/// `steady` must be a live handle; output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_steady_diagnostics(
    steady: *const SjSteady,
    residual: *mut f64,
    trace_error: *mut f64,
    min_eigenvalue: *mut f64,
) -> SjStatus {
    non_null!(steady, residual, trace_error, min_eigenvalue);
    guard(|| {
        let r = &(*steady).0;
        *residual = r.residual;
        *trace_error = r.trace_error;
        *min_eigenvalue = r.min_eigenvalue;
        SjStatus::Ok
    })
}

/// Row-major 4x4 density matrix in the basis `|00>, |01>, |10>, |11>`.
///
/// # Safety
/// `steady` must be a live handle; `re` and `im` must each hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn sj_steady_density(steady: *const SjSteady, re: *mut f64, im: *mut f64) -> SjStatus {
    non_null!(steady, re, im);
    guard(|| {
        let rho = &(*steady).0.rho;
        for r in 0..4 {
            for c in 0..4 {
                *re.add(4 * r + c) = rho[(r, c)].re;
                *im.add(4 * r + c) = rho[(r, c)].im;
            }
        }
        SjStatus::Ok
    })
}

/// # Safety
/// `steady` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sj_steady_free(steady: *mut SjSteady) {
    if !steady.is_null() {
        drop(Box::from_raw(steady));
    }
}

/// Junction current trace of a time-dependent method.
///
/// # Safety
/// `spec` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_trace_compute(spec: *const SjRunSpec, method: SjMethod, out: *mut *mut SjTrace) -> SjStatus {
    non_null!(spec, out);
    guard(|| {
        let m = match method {
            SjMethod::Born => RectifyMethod::Born,
            SjMethod::Kubo => RectifyMethod::Kubo,
            SjMethod::Oracle => RectifyMethod::Oracle,
        };
        match pipeline::trace_for(&(*spec).0, m) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(SjTrace(t)));
                SjStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of samples in a trace (0 for a null handle).
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sj_trace_len(trace: *const SjTrace) -> usize {
    if trace.is_null() {
        0
    } else {
        (*trace).0.times.len()
    }
}

/// Copy times and total current into caller buffers of length `len`.
///
/// # Safety
/// `trace` must be a live handle; `times` and `total` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sj_trace_copy(trace: *const SjTrace, times: *mut f64, total: *mut f64, len: usize) -> SjStatus {
    non_null!(trace, times, total);
    guard(|| {
        let t = &(*trace).0;
        if len < t.times.len() {
            set_error(format!("buffers hold {len} samples, {} needed", t.times.len()));
            return SjStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(t.times.as_ptr(), times, t.times.len());
        ptr::copy_nonoverlapping(t.total.as_ptr(), total, t.total.len());
        SjStatus::Ok
    })
}

/// Time average of the total current over `[0, horizon]`.
///
/// # Safety
/// `trace` must be a live handle and `value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sj_trace_time_average(trace: *const SjTrace, horizon: f64, value: *mut f64) -> SjStatus {
    non_null!(trace, value);
    guard(|| match (*trace).0.time_average(horizon) {
        Ok(v) => {
            *value = v;
            SjStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sj_trace_free(trace: *mut SjTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
