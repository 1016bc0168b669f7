//! C ABI over `merging`: opaque handles, integer status codes, and a per-thread
//! last-error message.
//!
//! Every function returns a [`MergingStatus`]; outputs go through pointers.
//! Handles are freed with their `_free` function; strings returned by the library
//! are freed with [`merging_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use merging::bounds::{bound_t3, exact_curve, exact_merging_time, Crossing, Distance, ExperimentReport};
use merging::config::{execute, ExperimentConfig};
use merging::environment::validate_environment;
use merging::io::environment_from_json;
use merging::networks::{cycle_edges, gen_stick, ConductanceSchedule, EdgeExpr};
use merging::report::csv_string;
use merging::spectral::poincare_gammas;
use merging::{Environment, Error, Kernel, Measure, Tolerances};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergingStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Structural = 3,
    Domain = 4,
    Range = 5,
    Hypothesis = 6,
    Unsupported = 7,
    Resource = 8,
    Config = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergingDistance {
    Tv = 0,
    Separation = 1,
}

impl From<MergingDistance> for Distance {
    fn from(d: MergingDistance) -> Self {
        match d {
            MergingDistance::Tv => Distance::Tv,
            MergingDistance::Separation => Distance::Separation,
        }
    }
}

/// Opaque environment handle.
pub struct MergingEnvironment(Environment);

/// Opaque experiment report handle.
pub struct MergingReport(ExperimentReport);

/// Returned by crossing queries when the horizon is exhausted first.
pub const MERGING_NOT_REACHED: i64 = -1;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MergingStatus {
    match e {
        Error::Structural(_) => MergingStatus::Structural,
        Error::Domain(_) => MergingStatus::Domain,
        Error::Range { .. } => MergingStatus::Range,
        Error::Hypothesis(_) => MergingStatus::Hypothesis,
        Error::Unsupported(_) => MergingStatus::Unsupported,
        Error::Resource(_) => MergingStatus::Resource,
        Error::Config(_) => MergingStatus::Config,
        Error::Io(_) => MergingStatus::Io,
    }
}

struct Fail(MergingStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MergingStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MergingStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MergingStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(MergingStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(MergingStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn env_arg<'a>(p: *const MergingEnvironment) -> Result<&'a Environment, Fail> {
    p.as_ref().map(|e| &e.0).ok_or_else(|| null("env"))
}

unsafe fn write_out<T>(out: *mut T, v: T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(name));
    }
    *out = v;
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err(Fail(MergingStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn merging_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds an environment from row-major kernels (`horizon·size·size` values) and
/// measures (`horizon·size` values). Invariance and monotonicity are checked.
#[no_mangle]
pub unsafe extern "C" fn merging_environment_new(
    size: usize,
    horizon: usize,
    kernels: *const f64,
    measures: *const f64,
    out: *mut *mut MergingEnvironment,
) -> MergingStatus {
    guard(|| {
        if kernels.is_null() || measures.is_null() {
            return Err(null("kernels or measures"));
        }
        if size == 0 || horizon == 0 {
            return Err(Error::Structural("size and horizon must be positive".into()).into());
        }
        let ks = std::slice::from_raw_parts(kernels, horizon * size * size);
        let ms = std::slice::from_raw_parts(measures, horizon * size);
        let mut kv = Vec::with_capacity(horizon);
        let mut mv = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let k = &ks[t * size * size..(t + 1) * size * size];
            kv.push(Kernel::new(DMatrix::from_row_slice(size, size, k))?);
            mv.push(Measure::new(ms[t * size..(t + 1) * size].to_vec())?);
        }
        let env = Environment::validated(
            kv.into_iter().map(Into::into).collect(),
            mv.into_iter().map(Into::into).collect(),
            &Tolerances::default(),
        )?;
        write_out(out, Box::into_raw(Box::new(MergingEnvironment(env))), "out")
    })
}

/// Parses an environment file (JSON). Hypotheses are not checked; see
/// [`merging_environment_validate`].
#[no_mangle]
pub unsafe extern "C" fn merging_environment_from_json(json: *const c_char, out: *mut *mut MergingEnvironment) -> MergingStatus {
    guard(|| {
        let env = environment_from_json(str_arg(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(MergingEnvironment(env))), "out")
    })
}

/// Lazy walk on the `n`-cycle with every edge conductance `min(start + slope·t, cap)`.
#[no_mangle]
pub unsafe extern "C" fn merging_environment_stick(
    n: usize,
    horizon: usize,
    start: f64,
    slope: f64,
    cap: f64,
    out: *mut *mut MergingEnvironment,
) -> MergingStatus {
    guard(|| {
        let s = ConductanceSchedule::uniform(n, horizon, &cycle_edges(n), EdgeExpr::LinearCapped { start, slope, cap }, true)?;
        let env = gen_stick(n, &s)?;
        write_out(out, Box::into_raw(Box::new(MergingEnvironment(env))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn merging_environment_free(env: *mut MergingEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

#[no_mangle]
pub unsafe extern "C" fn merging_environment_size(env: *const MergingEnvironment, out: *mut usize) -> MergingStatus {
    guard(|| write_out(out, env_arg(env)?.size(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn merging_environment_horizon(env: *const MergingEnvironment, out: *mut usize) -> MergingStatus {
    guard(|| write_out(out, env_arg(env)?.horizon(), "out"))
}

/// Writes the number of invariance and monotonicity violations to `violations`.
#[no_mangle]
pub unsafe extern "C" fn merging_environment_validate(env: *const MergingEnvironment, violations: *mut usize) -> MergingStatus {
    guard(|| {
        let r = validate_environment(env_arg(env)?, &Tolerances::default());
        write_out(violations, r.violations.len(), "violations")
    })
}

/// `γ(K_t* K_t)` for `t = 1..=horizon` into `out[0..horizon]`.
#[no_mangle]
pub unsafe extern "C" fn merging_poincare_gammas(env: *const MergingEnvironment, out: *mut f64, len: usize) -> MergingStatus {
    guard(|| fill(out, len, &poincare_gammas(env_arg(env)?)?))
}

/// Exact distance between `μ_t^x` and `μ_t^y` for `t = 1..=horizon`.
#[no_mangle]
pub unsafe extern "C" fn merging_exact_curve(
    env: *const MergingEnvironment,
    x: usize,
    y: usize,
    distance: MergingDistance,
    out: *mut f64,
    len: usize,
) -> MergingStatus {
    guard(|| fill(out, len, &exact_curve(env_arg(env)?, x, y, distance.into())?))
}

/// First `t` with distance at most `eta`, or [`MERGING_NOT_REACHED`].
#[no_mangle]
pub unsafe extern "C" fn merging_exact_merging_time(
    env: *const MergingEnvironment,
    x: usize,
    y: usize,
    eta: f64,
    distance: MergingDistance,
    out: *mut i64,
) -> MergingStatus {
    guard(|| {
        let t = match exact_merging_time(env_arg(env)?, x, y, eta, distance.into())? {
            Crossing::At(t) => t as i64,
            Crossing::NotReached => MERGING_NOT_REACHED,
        };
        write_out(out, t, "out")
    })
}

/// Time-inhomogeneous spectral total-variation bound at time `t`; `gammas` holds at
/// least `t` values.
#[no_mangle]
pub unsafe extern "C" fn merging_bound_t3(
    env: *const MergingEnvironment,
    gammas: *const f64,
    len: usize,
    x: usize,
    y: usize,
    t: usize,
    out: *mut f64,
) -> MergingStatus {
    guard(|| {
        if gammas.is_null() {
            return Err(null("gammas"));
        }
        let g = std::slice::from_raw_parts(gammas, len);
        write_out(out, bound_t3(env_arg(env)?, g, x, y, t)?, "out")
    })
}

/// Runs an experiment described by a TOML document. Nothing is written to disk.
#[no_mangle]
pub unsafe extern "C" fn merging_run_config(toml: *const c_char, out: *mut *mut MergingReport) -> MergingStatus {
    guard(|| {
        let c = ExperimentConfig::from_toml(str_arg(toml, "toml")?)?;
        let outcome = execute(&c)?;
        write_out(out, Box::into_raw(Box::new(MergingReport(outcome.report))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn merging_report_free(report: *mut MergingReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Smallest dominance margin, NaN when no bound applied.
#[no_mangle]
pub unsafe extern "C" fn merging_report_min_margin(report: *const MergingReport, out: *mut f64) -> MergingStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        write_out(out, r.0.min_margin.unwrap_or(f64::NAN), "out")
    })
}

/// The report as CSV; free with [`merging_string_free`].
#[no_mangle]
pub unsafe extern "C" fn merging_report_csv(report: *const MergingReport, out: *mut *mut c_char) -> MergingStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let s = CString::new(csv_string(&r.0)?).map_err(|e| Fail(MergingStatus::Io, e.to_string()))?;
        write_out(out, s.into_raw(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn merging_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
