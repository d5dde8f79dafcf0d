//! C ABI over the simulation library.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns a [`PadmStatus`] and
//! leaves a message for [`padm_last_error`] on failure.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};
use num_complex::Complex64;
use passive_admittance::analysis::{inf_norm_error, l2_gain_estimate, scaling_fit};
use passive_admittance::control::{admittance_tf_passive, admittance_tf_standard, LinearParams, TfError};
use passive_admittance::scenario::{parse_scenario, set_param, ScenarioError, SweepParam};
use passive_admittance::sim::{run_scenario, Scenario, SimError, Trace};
use passive_admittance::trace_csv;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadmStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, index out of range or short buffer.
    InvalidArgument = 1,
    Validation = 2,
    /// The run blew up; a partial trace is still returned.
    Diverged = 3,
    Io = 4,
    Analysis = 5,
    Panic = 6,
}

/// A validated scenario.
pub struct PadmScenario {
    inner: Scenario,
}

/// A simulation trace, one sample per control tick.
pub struct PadmTrace {
    inner: Trace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NULs stripped"));
}

struct Fail(PadmStatus, String);

impl Fail {
    fn arg(msg: impl Into<String>) -> Self {
        Fail(PadmStatus::InvalidArgument, msg.into())
    }
}

impl From<ScenarioError> for Fail {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::Io { .. } => PadmStatus::Io,
            _ => PadmStatus::Validation,
        };
        Fail(status, e.to_string())
    }
}

impl From<TfError> for Fail {
    fn from(e: TfError) -> Self {
        Fail(PadmStatus::Analysis, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PadmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PadmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PadmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::arg(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::arg(format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::arg(format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::arg(format!("{what} is null")))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn padm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn padm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses scenario TOML. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn padm_scenario_from_str(text: *const c_char, out: *mut *mut PadmScenario) -> PadmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let loaded = parse_scenario(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(PadmScenario { inner: loaded.scenario }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn padm_scenario_free(scenario: *mut PadmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Sets one of `eps`, `K`, `K_P`, `M_n`, `wall.stiffness`. On failure the
/// scenario is unchanged.
///
/// # Safety
/// `scenario` must be a live handle; `param` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn padm_scenario_set_param(
    scenario: *mut PadmScenario,
    param: *const c_char,
    value: f64,
) -> PadmStatus {
    guard(|| {
        let s = out_arg(scenario, "scenario")?;
        let param: SweepParam = str_arg(param, "param")?.parse().map_err(|e: ScenarioError| Fail::from(e))?;
        s.inner = set_param(&s.inner, param, value)?;
        Ok(())
    })
}

/// Runs the scenario. On `Ok` or `Diverged`, `*out` owns a new trace
/// (partial when diverged); otherwise it is null.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn padm_run(scenario: *const PadmScenario, out: *mut *mut PadmTrace) -> PadmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = ref_arg(scenario, "scenario")?;
        match run_scenario(&s.inner) {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(PadmTrace { inner: trace }));
                Ok(())
            }
            Err(SimError::Diverged { time, reason, trace }) => {
                *out = Box::into_raw(Box::new(PadmTrace { inner: *trace }));
                Err(Fail(PadmStatus::Diverged, format!("diverged at t = {time}: {reason}")))
            }
            Err(e) => Err(Fail(PadmStatus::Validation, e.to_string())),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_free(trace: *mut PadmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_len(trace: *const PadmTrace) -> size_t {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// Port dimension; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_dim(trace: *const PadmTrace) -> size_t {
    trace.as_ref().map_or(0, |t| t.inner.meta.dim)
}

/// Copies the column named as in the CSV header (`t`, `q[0]`, `E_plant`,
/// ...) into `buf`. `*written` receives the sample count; pass a null
/// `buf` to query it.
///
/// # Safety
/// `buf` must hold `cap` doubles or be null; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_column(
    trace: *const PadmTrace,
    name: *const c_char,
    buf: *mut f64,
    cap: size_t,
    written: *mut size_t,
) -> PadmStatus {
    guard(|| {
        let t = &ref_arg(trace, "trace")?.inner;
        let name = str_arg(name, "name")?;
        let written = out_arg(written, "written")?;
        let col = trace_csv::header(&t.meta)
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Fail::arg(format!("no column `{name}`")))?;
        *written = t.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < t.len() {
            return Err(Fail::arg(format!("buffer holds {cap}, need {}", t.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, t.len());
        for (o, s) in out.iter_mut().zip(&t.samples) {
            *o = trace_csv::row(s)[col];
        }
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_write_csv(trace: *const PadmTrace, path: *const c_char) -> PadmStatus {
    guard(|| {
        let t = &ref_arg(trace, "trace")?.inner;
        let path = str_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| Fail(PadmStatus::Io, format!("{path}: {e}")))?;
        trace_csv::write_trace(t, std::io::BufWriter::new(file)).map_err(|e| Fail(PadmStatus::Io, format!("{path}: {e}")))
    })
}

/// sup_t |q_n − q| on one axis.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_inf_norm_error(trace: *const PadmTrace, axis: size_t, out: *mut f64) -> PadmStatus {
    guard(|| {
        let t = &ref_arg(trace, "trace")?.inner;
        let out = out_arg(out, "out")?;
        if axis >= t.meta.dim {
            return Err(Fail::arg(format!("axis {axis} out of range")));
        }
        *out = inf_norm_error(t, axis);
        Ok(())
    })
}

/// Empirical L2-gain ratio of the run.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn padm_trace_l2_gain(trace: *const PadmTrace, out: *mut f64) -> PadmStatus {
    guard(|| {
        let t = &ref_arg(trace, "trace")?.inner;
        let out = out_arg(out, "out")?;
        *out = l2_gain_estimate(t).map_err(|e| Fail(PadmStatus::Analysis, e.to_string()))?;
        Ok(())
    })
}

/// Consecutive error ratios (`n − 1` of them, into `ratios`) and the
/// log-log slope of error against eps.
///
/// # Safety
/// `eps` and `err` must hold `n` doubles, `ratios` `n − 1`; `slope` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn padm_scaling_fit(
    eps: *const f64,
    err: *const f64,
    n: size_t,
    ratios: *mut f64,
    slope: *mut f64,
) -> PadmStatus {
    guard(|| {
        if eps.is_null() || err.is_null() || ratios.is_null() {
            return Err(Fail::arg("null array"));
        }
        let slope = out_arg(slope, "slope")?;
        let (e, r) = (std::slice::from_raw_parts(eps, n), std::slice::from_raw_parts(err, n));
        let pts: Vec<(f64, f64)> = e.iter().copied().zip(r.iter().copied()).collect();
        let fit = scaling_fit(&pts).map_err(|e| Fail(PadmStatus::Analysis, e.to_string()))?;
        std::slice::from_raw_parts_mut(ratios, fit.ratios.len()).copy_from_slice(&fit.ratios);
        *slope = fit.slope;
        Ok(())
    })
}

type Tf = fn(&LinearParams, Complex64) -> Result<Complex64, TfError>;

#[allow(clippy::too_many_arguments)]
unsafe fn eval_tf(
    tf: Tf,
    m: f64,
    m_n: f64,
    d_n: f64,
    k: f64,
    kp: f64,
    s_re: f64,
    s_im: f64,
    re: *mut f64,
    im: *mut f64,
) -> PadmStatus {
    guard(|| {
        let (re, im) = (out_arg(re, "re")?, out_arg(im, "im")?);
        let p = LinearParams { plant_mass: m, nominal_mass: m_n, nominal_damping: d_n, k, kp };
        let v = tf(&p, Complex64::new(s_re, s_im))?;
        (*re, *im) = (v.re, v.im);
        Ok(())
    })
}

/// Closed-loop q̇/τ_h of the standard controller at complex `s`.
///
/// # Safety
/// `re` and `im` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn padm_admittance_tf_standard(
    m: f64,
    m_n: f64,
    d_n: f64,
    k: f64,
    kp: f64,
    s_re: f64,
    s_im: f64,
    re: *mut f64,
    im: *mut f64,
) -> PadmStatus {
    eval_tf(admittance_tf_standard, m, m_n, d_n, k, kp, s_re, s_im, re, im)
}

/// Closed-loop q̇/τ_h of the passive controller at complex `s`.
///
/// # Safety
/// `re` and `im` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn padm_admittance_tf_passive(
    m: f64,
    m_n: f64,
    d_n: f64,
    k: f64,
    kp: f64,
    s_re: f64,
    s_im: f64,
    re: *mut f64,
    im: *mut f64,
) -> PadmStatus {
    eval_tf(admittance_tf_passive, m, m_n, d_n, k, kp, s_re, s_im, re, im)
}
