//! C ABI over `mrs-core`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`MrsStatus`]; on failure
//! the message is available from [`mrs_last_error`] on the same thread until
//! the next failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mrs_core::error::MrsError;
use mrs_core::integrate::Method;
use mrs_core::scenarios::{EstimateReport, Scenario, ScenarioConfig, ScenarioKind};

/// Result codes. Values 2 and 3 agree with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Numerical = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsMethod {
    Heun = 0,
    Rk4 = 1,
    Rk6 = 2,
}

/// Signed error components on one interval or summed over the run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MrsComponents {
    pub residual: f64,
    pub explicit_: f64,
    pub quadrature: f64,
    pub regularization: f64,
}

/// Per-seed result. `effectivity` is NaN when the true pairing vanishes.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MrsSeedSummary {
    pub seed: u64,
    pub estimate: f64,
    pub true_pairing: f64,
    pub effectivity: f64,
    pub totals: MrsComponents,
}

/// Opaque scenario handle: a validated configuration and its built system.
pub struct MrsScenario {
    inner: Scenario,
}

/// Opaque estimate handle.
pub struct MrsEstimate {
    inner: EstimateReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &MrsError) -> MrsStatus {
    match e.exit_code() {
        2 => MrsStatus::Config,
        3 => MrsStatus::Numerical,
        _ => MrsStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (MrsStatus, String)>) -> MrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MrsStatus::Panic
        }
    }
}

fn core<T>(r: mrs_core::error::Result<T>) -> Result<T, (MrsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MrsStatus, String) {
    (MrsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MrsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MrsStatus::Config, format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MrsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (MrsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err((
            MrsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn build(config: ScenarioConfig, out: *mut *mut MrsScenario) -> Result<(), (MrsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let inner = core(Scenario::build(&config))?;
    unsafe { *out = Box::into_raw(Box::new(MrsScenario { inner })) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mrs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds one of `circle_relax`, `circle_shear`, `fiber_network` with its
/// default parameters.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrs_scenario_builtin(
    name: *const c_char,
    out: *mut *mut MrsScenario,
) -> MrsStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let kind = ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| (MrsStatus::Config, format!("unknown scenario `{name}`")))?;
        build(ScenarioConfig::builtin(kind), out)
    })
}

/// Builds a scenario from configuration text in the CLI's TOML format.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrs_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut MrsScenario,
) -> MrsStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        build(core(ScenarioConfig::from_toml_str(text))?, out)
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrs_scenario_free(scenario: *mut MrsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Spatial dimension (2 or 3) and marker count.
///
/// # Safety
/// `scenario` must be a live handle; `dim` and `markers` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_scenario_shape(
    scenario: *const MrsScenario,
    dim: *mut usize,
    markers: *mut usize,
) -> MrsStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        if dim.is_null() || markers.is_null() {
            return Err(null("dim/markers"));
        }
        *dim = s.inner.system.dim();
        *markers = s.inner.system.num_points();
        Ok(())
    })
}

/// Copies the initial marker positions, point-major, into `out[0..dim*markers]`.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mrs_scenario_initial_positions(
    scenario: *const MrsScenario,
    out: *mut f64,
    len: usize,
) -> MrsStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        copy_out(&s.inner.initial.positions, out, len)
    })
}

/// Integrates to the configured end time and copies the final positions.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mrs_simulate(
    scenario: *const MrsScenario,
    out: *mut f64,
    len: usize,
) -> MrsStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let traj = core(s.inner.forward())?;
        copy_out(traj.final_state(), out, len)
    })
}

/// Endpoint errors against the sixth-order reference for `levels` halvings of
/// the configured step. Writes `levels` errors.
///
/// # Safety
/// `scenario` must be a live handle and `errors` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mrs_converge(
    scenario: *const MrsScenario,
    method: MrsMethod,
    levels: usize,
    errors: *mut f64,
    len: usize,
) -> MrsStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let m = match method {
            MrsMethod::Heun => Method::Heun,
            MrsMethod::Rk4 => Method::Rk4,
            MrsMethod::Rk6 => Method::Rk6,
        };
        let table = core(s.inner.converge(m, levels))?;
        let e: Vec<f64> = table.rows.iter().map(|r| r.error).collect();
        copy_out(&e, errors, len)
    })
}

/// Runs the forward solve, one adjoint per configured seed, and the error
/// decomposition.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrs_estimate(
    scenario: *const MrsScenario,
    out: *mut *mut MrsEstimate,
) -> MrsStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = core(s.inner.estimate())?;
        *out = Box::into_raw(Box::new(MrsEstimate { inner }));
        Ok(())
    })
}

/// # Safety
/// `estimate` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrs_estimate_free(estimate: *mut MrsEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// Number of seeds and of time intervals in the estimate.
///
/// # Safety
/// `estimate` must be a live handle; `seeds` and `intervals` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_estimate_shape(
    estimate: *const MrsEstimate,
    seeds: *mut usize,
    intervals: *mut usize,
) -> MrsStatus {
    guard(|| {
        let e = handle(estimate, "estimate")?;
        if seeds.is_null() || intervals.is_null() {
            return Err(null("seeds/intervals"));
        }
        *seeds = e.inner.seeds.len();
        *intervals = e.inner.trajectory.num_intervals();
        Ok(())
    })
}

fn components(c: &mrs_core::estimators::Components) -> MrsComponents {
    MrsComponents {
        residual: c.residual,
        explicit_: c.explicit,
        quadrature: c.quadrature,
        regularization: c.regularization,
    }
}

/// Summary of seed number `index` (0-based, not the seed value).
///
/// # Safety
/// `estimate` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_estimate_seed(
    estimate: *const MrsEstimate,
    index: usize,
    out: *mut MrsSeedSummary,
) -> MrsStatus {
    guard(|| {
        let e = handle(estimate, "estimate")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = e.inner.seeds.get(index).ok_or_else(|| {
            (
                MrsStatus::OutOfRange,
                format!("seed index {index} out of range"),
            )
        })?;
        *out = MrsSeedSummary {
            seed: s.seed,
            estimate: s.estimate,
            true_pairing: s.true_pairing,
            effectivity: s.effectivity.unwrap_or(f64::NAN),
            totals: components(&s.breakdown.totals()),
        };
        Ok(())
    })
}

/// Per-interval components for seed number `index`, one entry per interval.
///
/// # Safety
/// `estimate` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mrs_estimate_intervals(
    estimate: *const MrsEstimate,
    index: usize,
    out: *mut MrsComponents,
    len: usize,
) -> MrsStatus {
    guard(|| {
        let e = handle(estimate, "estimate")?;
        let s = e.inner.seeds.get(index).ok_or_else(|| {
            (
                MrsStatus::OutOfRange,
                format!("seed index {index} out of range"),
            )
        })?;
        let rows = &s.breakdown.intervals;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < rows.len() {
            return Err((
                MrsStatus::BufferTooSmall,
                format!("buffer holds {len} intervals, {} needed", rows.len()),
            ));
        }
        for (k, c) in rows.iter().enumerate() {
            *out.add(k) = components(c);
        }
        Ok(())
    })
}
