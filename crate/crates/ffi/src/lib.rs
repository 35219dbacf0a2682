//! C interface to `polytrack`.
//!
//! Every function returns a [`PtStatus`]. Objects cross the boundary as
//! opaque handles created by `*_load`, `*_from_json`, `pt_synthesize` or
//! `pt_simulate` and released by the matching `*_free`. After a failure
//! `pt_last_error_message` describes it; the message is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::DVector;
use polytrack::cli::synthesize_library;
use polytrack::environment::{self, Environment};
use polytrack::simulator::{self, Integrator, SimConfig, TrajectoryLog};
use polytrack::synthesis::{GainLibrary, RateMode, SynthesisConfig};
use polytrack::trajectory::{bernstein_basis, eval, ControlPoints};
use polytrack::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Dimension = 4,
    Io = 5,
    Parse = 6,
    Schema = 7,
    Infeasible = 8,
    Solver = 9,
    RelativeDegree = 10,
    Simulation = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtRateMode {
    Exponential = 0,
    Paper = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtIntegrator {
    Rk4 = 0,
    Euler = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtSynthesisOptions {
    pub alpha: f64,
    pub delta: f64,
    pub k_max: f64,
    pub time_scale: f64,
    pub mode: PtRateMode,
    pub per_axis: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtSimulationOptions {
    pub dt: f64,
    pub time_scale: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub integrator: PtIntegrator,
}

/// Cell decomposition with one reference segment per cell.
pub struct PtEnvironment(Environment);

/// Synthesized gains and their certificates.
pub struct PtGainLibrary(GainLibrary);

/// One simulated run.
pub struct PtTrajectoryLog(TrajectoryLog);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PtStatus {
    match e {
        Error::Domain(_) => PtStatus::Domain,
        Error::Dimension(_) => PtStatus::Dimension,
        Error::Schema { .. } => PtStatus::Schema,
        Error::Parse { .. } => PtStatus::Parse,
        Error::Io { .. } => PtStatus::Io,
        Error::Solver(_) => PtStatus::Solver,
        Error::Unbounded => PtStatus::Domain,
        Error::RelativeDegree => PtStatus::RelativeDegree,
        Error::Infeasible { .. } => PtStatus::Infeasible,
        Error::Integration { .. }
        | Error::NoContainingCell
        | Error::MissingGain(_)
        | Error::Timeout { .. } => PtStatus::Simulation,
    }
}

struct Failure(PtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: PtStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `body`, record any error and turn panics into `PtStatus::Panic`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            PtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PtStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(PtStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(PtStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(PtStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(PtStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, name: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(fail(PtStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(PtStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn degree(n: i32) -> Result<usize, Failure> {
    usize::try_from(n).map_err(|_| fail(PtStatus::Domain, format!("degree {n} is negative")))
}

/// Copy the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bernstein basis of degree `n` at `t`; `out` receives `n + 1` values.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_bernstein_basis(n: i32, t: f64, out: *mut f64, out_len: usize) -> PtStatus {
    guard(|| {
        let n = degree(n)?;
        let out = slice_mut(out, out_len, "out")?;
        if out_len < n + 1 {
            return Err(fail(PtStatus::BufferTooSmall, format!("need {} values", n + 1)));
        }
        let b = bernstein_basis(n, t)?;
        out[..=n].copy_from_slice(b.as_slice());
        Ok(())
    })
}

/// `q`-th derivative at `t` of the curve with `degree + 1` control points of
/// dimension `dim`, stored point after point. `out` receives `dim` values.
///
/// # Safety
/// `points` must point to `(degree + 1) * dim` doubles and `out` to `dim`.
#[no_mangle]
pub unsafe extern "C" fn pt_bezier_eval(
    points: *const f64,
    dim: usize,
    degree_n: i32,
    t: f64,
    q: u32,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let n = degree(degree_n)?;
        if dim == 0 {
            return Err(fail(PtStatus::Dimension, "dimension must be positive"));
        }
        let flat = slice(points, (n + 1) * dim, "points")?;
        let out = slice_mut(out, dim, "out")?;
        let pts: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let value = eval(&ControlPoints::from_points(&pts)?, t, q as usize)?;
        out.copy_from_slice(value.as_slice());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_environment_load(path: *const c_char, out: *mut *mut PtEnvironment) -> PtStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let env = environment::load(PathBuf::from(string(path, "path")?))?;
        *out = Box::into_raw(Box::new(PtEnvironment(env)));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_environment_from_json(json: *const c_char, out: *mut *mut PtEnvironment) -> PtStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let env = environment::from_json_str(&string(json, "json")?)?;
        *out = Box::into_raw(Box::new(PtEnvironment(env)));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pt_environment_free(env: *mut PtEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle, the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pt_environment_shape(
    env: *const PtEnvironment,
    dimension: *mut usize,
    cells: *mut usize,
) -> PtStatus {
    guard(|| {
        let env = &deref(env, "env")?.0;
        *out_ref(dimension, "dimension")? = env.dimension();
        *out_ref(cells, "cells")? = env.cells().len();
        Ok(())
    })
}

/// Number of validation findings; zero means the environment is usable.
/// The findings themselves are left in the last error message.
///
/// # Safety
/// `env` must be a live handle and `findings` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_environment_validate(env: *const PtEnvironment, findings: *mut usize) -> PtStatus {
    let mut report = String::new();
    let status = guard(|| {
        let env = &deref(env, "env")?.0;
        let r = env.validate();
        *out_ref(findings, "findings")? = r.findings.len();
        report = r.to_string();
        Ok(())
    });
    if status == PtStatus::Ok {
        set_error(report);
    }
    status
}

#[no_mangle]
pub extern "C" fn pt_synthesis_options_default() -> PtSynthesisOptions {
    let c = SynthesisConfig::default();
    PtSynthesisOptions {
        alpha: c.alpha,
        delta: c.delta,
        k_max: c.k_max,
        time_scale: c.time_scale,
        mode: PtRateMode::Exponential,
        per_axis: false,
    }
}

/// Synthesize a gain for every cell, modeling the agent as a single
/// integrator per axis. `options` may be null for the defaults.
///
/// # Safety
/// `env` must be a live handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_synthesize(
    env: *const PtEnvironment,
    options: *const PtSynthesisOptions,
    out: *mut *mut PtGainLibrary,
) -> PtStatus {
    guard(|| {
        let env = &deref(env, "env")?.0;
        let out = out_ref(out, "out")?;
        let o = options.as_ref().copied().unwrap_or_else(|| pt_synthesis_options_default());
        let config = SynthesisConfig {
            alpha: o.alpha,
            delta: o.delta,
            k_max: o.k_max,
            time_scale: o.time_scale,
            mode: match o.mode {
                PtRateMode::Exponential => RateMode::Exponential,
                PtRateMode::Paper => RateMode::Paper,
            },
            ..SynthesisConfig::default()
        };
        let library = synthesize_library(env, &config, o.per_axis)?;
        *out = Box::into_raw(Box::new(PtGainLibrary(library)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_gain_library_load(path: *const c_char, out: *mut *mut PtGainLibrary) -> PtStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let library = GainLibrary::load(PathBuf::from(string(path, "path")?))?;
        *out = Box::into_raw(Box::new(PtGainLibrary(library)));
        Ok(())
    })
}

/// # Safety
/// `library` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pt_gain_library_save(library: *const PtGainLibrary, path: *const c_char) -> PtStatus {
    guard(|| {
        let library = &deref(library, "library")?.0;
        library.save(PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `library` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pt_gain_library_free(library: *mut PtGainLibrary) {
    if !library.is_null() {
        drop(Box::from_raw(library));
    }
}

/// # Safety
/// `library` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_gain_library_len(library: *const PtGainLibrary, count: *mut usize) -> PtStatus {
    guard(|| {
        *out_ref(count, "count")? = deref(library, "library")?.0.cells.len();
        Ok(())
    })
}

/// Certified rate and certificate outcome of entry `index`.
///
/// # Safety
/// `library` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pt_gain_library_certificate(
    library: *const PtGainLibrary,
    index: usize,
    mu: *mut f64,
    passed: *mut bool,
) -> PtStatus {
    guard(|| {
        let cells = &deref(library, "library")?.0.cells;
        let entry = cells
            .get(index)
            .ok_or_else(|| fail(PtStatus::InvalidArgument, format!("index {index} out of range")))?;
        *out_ref(mu, "mu")? = entry.mu;
        *out_ref(passed, "passed")? = entry.certificate.passed;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn pt_simulation_options_default() -> PtSimulationOptions {
    let c = SimConfig::default();
    PtSimulationOptions {
        dt: c.dt,
        time_scale: c.time_scale,
        noise_variance: c.noise_variance,
        seed: c.seed,
        integrator: PtIntegrator::Rk4,
    }
}

/// Simulate from `x0` (length `len`) to the end of the chain. `options`
/// may be null for the defaults.
///
/// # Safety
/// Handles must be live, `x0` must point to `len` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_simulate(
    env: *const PtEnvironment,
    library: *const PtGainLibrary,
    x0: *const f64,
    len: usize,
    options: *const PtSimulationOptions,
    out: *mut *mut PtTrajectoryLog,
) -> PtStatus {
    guard(|| {
        let env = &deref(env, "env")?.0;
        let library = &deref(library, "library")?.0;
        let x0 = DVector::from_column_slice(slice(x0, len, "x0")?);
        let out = out_ref(out, "out")?;
        let o = options.as_ref().copied().unwrap_or_else(|| pt_simulation_options_default());
        let config = SimConfig {
            dt: o.dt,
            time_scale: o.time_scale,
            noise_variance: o.noise_variance,
            seed: o.seed,
            integrator: match o.integrator {
                PtIntegrator::Rk4 => Integrator::Rk4,
                PtIntegrator::Euler => Integrator::Euler,
            },
            ..SimConfig::default()
        };
        let log = simulator::run(env, library, &x0, &config)?;
        *out = Box::into_raw(Box::new(PtTrajectoryLog(log)));
        Ok(())
    })
}

/// # Safety
/// `log` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pt_log_free(log: *mut PtTrajectoryLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtLogSummary {
    pub records: usize,
    pub switches: usize,
    pub duration: f64,
    pub min_h: f64,
    pub max_v: f64,
}

/// # Safety
/// `log` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_log_summary(log: *const PtTrajectoryLog, out: *mut PtLogSummary) -> PtStatus {
    guard(|| {
        let log = &deref(log, "log")?.0;
        *out_ref(out, "out")? = PtLogSummary {
            records: log.records.len(),
            switches: log.switches.len(),
            duration: log.last().t,
            min_h: log.min_h(),
            max_v: log.max_v(),
        };
        Ok(())
    })
}

/// Final agent state; `out` receives the state dimension worth of values.
///
/// # Safety
/// `log` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_log_final_state(log: *const PtTrajectoryLog, out: *mut f64, len: usize) -> PtStatus {
    guard(|| {
        let x = &deref(log, "log")?.0.last().x;
        let out = slice_mut(out, len, "out")?;
        if len < x.len() {
            return Err(fail(PtStatus::BufferTooSmall, format!("need {} values", x.len())));
        }
        out[..x.len()].copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// # Safety
/// `log` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pt_log_write_csv(log: *const PtTrajectoryLog, path: *const c_char) -> PtStatus {
    guard(|| {
        let log = &deref(log, "log")?.0;
        log.write_csv(PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}
