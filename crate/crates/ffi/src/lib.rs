//! C interface to `sqa-core`.
//!
//! Systems and schedules are opaque handles created from JSON and released
//! with the matching `*_free`. Every call returns an [`SqaStatus`]; on failure
//! [`sqa_last_error_message`] describes the problem. Strings returned through
//! `char **` are owned by the caller and must be released with
//! [`sqa_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sqa_core::evolve::{integrate_master, uniform, EvolveOptions};
use sqa_core::generator::{adiabatic_ratio, Generator};
use sqa_core::lattice::{ProblemFile, SpinConfiguration, TrotterSystem};
use sqa_core::mcmc::{run_annealed, SampleOptions};
use sqa_core::schedule::{check_proposition1, gamma_from_field, Proposition1Options, Schedule, ScheduleSpec};
use sqa_core::SqaError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    ResourceCap = 4,
    Numerical = 5,
    Internal = 6,
}

/// Transverse field and Trotter coupling with its first two derivatives.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SqaScheduleValue {
    pub field: f64,
    pub gamma: f64,
    pub dgamma: f64,
    pub d2gamma: f64,
}

/// Opaque Trotter system.
pub struct SqaSystem {
    problem: ProblemFile,
    sys: TrotterSystem,
}

/// Opaque schedule bound to a system.
pub struct SqaSchedule {
    schedule: Schedule,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &SqaError) -> SqaStatus {
    match e {
        SqaError::Input(_) | SqaError::Json(_) | SqaError::Io(_) => SqaStatus::InvalidInput,
        SqaError::Domain(_) => SqaStatus::Domain,
        SqaError::ResourceCap { .. } => SqaStatus::ResourceCap,
        SqaError::Stiff { .. } | SqaError::Degenerate { .. } | SqaError::Check(_) => SqaStatus::Numerical,
        SqaError::State(_) => SqaStatus::Internal,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F>(f: F) -> SqaStatus
where
    F: FnOnce() -> Result<(), (SqaStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SqaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SqaStatus::Internal
        }
    }
}

fn core<T>(r: sqa_core::Result<T>) -> Result<T, (SqaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SqaStatus, String) {
    (SqaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SqaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SqaStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), (SqaStatus, String)> {
    let c = CString::new(text).map_err(|_| (SqaStatus::Internal, "output contains NUL".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, (SqaStatus, String)> {
    serde_json::to_string(v).map_err(|e| (SqaStatus::Internal, e.to_string()))
}

/// Message for the most recent failing call on this thread; empty after a
/// success. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sqa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a system from a problem description such as
/// `{"n_sites":2,"edges":[[1,2,1.0]],"trotter_slices":2,"beta":1.0}`.
#[no_mangle]
pub unsafe extern "C" fn sqa_system_from_json(json: *const c_char, out: *mut *mut SqaSystem) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let problem = core(ProblemFile::from_json(text))?;
        let sys = core(problem.sampling_system())?;
        *out = Box::into_raw(Box::new(SqaSystem { problem, sys }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sqa_system_free(sys: *mut SqaSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of lattice spins `N * M`.
#[no_mangle]
pub unsafe extern "C" fn sqa_system_n_spins(sys: *const SqaSystem, out: *mut usize) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.sys.n_spins();
        Ok(())
    })
}

/// `beta H_0` for `len = N * M` spins of value `±1`, laid out slice-major.
#[no_mangle]
pub unsafe extern "C" fn sqa_trotter_action(
    sys: *const SqaSystem,
    spins: *const i8,
    len: usize,
    gamma: f64,
    out: *mut f64,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        if spins.is_null() || out.is_null() {
            return Err(null("spins or out"));
        }
        let slice = std::slice::from_raw_parts(spins, len);
        let config = core(SpinConfiguration::from_spins(slice, s.sys.n_sites(), s.sys.trotter_slices()))?;
        *out = core(s.sys.trotter_action(&config, gamma))?;
        Ok(())
    })
}

/// `gamma = (1/2) ln coth(beta Gamma / M)`.
#[no_mangle]
pub unsafe extern "C" fn sqa_gamma_from_field(field: f64, beta: f64, trotter_slices: usize, out: *mut f64) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = core(gamma_from_field(field, beta, trotter_slices))?;
        Ok(())
    })
}

/// Binds a schedule description such as `{"family":"power_law","c1":1.0,"c2":1.0}`.
#[no_mangle]
pub unsafe extern "C" fn sqa_schedule_from_json(
    sys: *const SqaSystem,
    json: *const c_char,
    out: *mut *mut SqaSchedule,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = core(ScheduleSpec::from_json(read_str(json, "json")?))?;
        let schedule = core(spec.bind(&s.sys))?;
        *out = Box::into_raw(Box::new(SqaSchedule { schedule }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sqa_schedule_free(schedule: *mut SqaSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sqa_schedule_eval(schedule: *const SqaSchedule, t: f64, out: *mut SqaScheduleValue) -> SqaStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = core(s.schedule.eval(t))?;
        *out = SqaScheduleValue { field: v.field, gamma: v.gamma, dgamma: v.dgamma, d2gamma: v.d2gamma };
        Ok(())
    })
}

fn dense(s: &SqaSystem) -> Result<TrotterSystem, (SqaStatus, String)> {
    core(s.problem.system())
}

/// Equilibrium distribution at Trotter coupling `gamma` into `out[0..len]`,
/// `len = 2^(N M)`.
#[no_mangle]
pub unsafe extern "C" fn sqa_boltzmann(sys: *const SqaSystem, gamma: f64, out: *mut f64, len: usize) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = core(sqa_core::evolve::boltzmann(&dense(s)?, gamma))?;
        if p.len() != len {
            return Err((SqaStatus::InvalidInput, format!("buffer holds {len} values, need {}", p.len())));
        }
        ptr::copy_nonoverlapping(p.as_ptr(), out, len);
        Ok(())
    })
}

/// Spectral report (gap, derivative norm, bound, adiabatic ratio) at `t` as JSON.
#[no_mangle]
pub unsafe extern "C" fn sqa_spectral_report_json(
    sys: *const SqaSystem,
    schedule: *const SqaSchedule,
    t: f64,
    out: *mut *mut c_char,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let sc = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = core(adiabatic_ratio(&dense(s)?, &sc.schedule, t))?;
        write_string(out, to_json(&r)?)
    })
}

/// Master-equation run from the uniform distribution; JSON with the final
/// distribution and distances.
#[no_mangle]
pub unsafe extern "C" fn sqa_evolve_master_json(
    sys: *const SqaSystem,
    schedule: *const SqaSchedule,
    horizon: f64,
    out: *mut *mut c_char,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let sc = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let gen = core(Generator::new(&dense(s)?))?;
        let opts = EvolveOptions { observation_points: 32, track_spectrum: false, ..EvolveOptions::default() };
        let tr = core(integrate_master(&gen, &sc.schedule, &uniform(gen.dim()), horizon, &opts))?;
        let v = serde_json::json!({
            "horizon": horizon,
            "final_distribution": tr.final_state(),
            "final_tv_inst": tr.final_tv_inst(),
            "stats": tr.stats,
        });
        write_string(out, v.to_string())
    })
}

/// Monte Carlo run; JSON run summary.
#[no_mangle]
pub unsafe extern "C" fn sqa_sample_json(
    sys: *const SqaSystem,
    schedule: *const SqaSchedule,
    horizon: f64,
    replicas: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let sc = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let summary = core(run_annealed(&s.sys, &sc.schedule, &SampleOptions::new(horizon, replicas, seed)))?;
        write_string(out, to_json(&summary)?)
    })
}

/// Schedule-condition report as JSON; `options_json` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn sqa_schedule_check_json(
    sys: *const SqaSystem,
    schedule: *const SqaSchedule,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> SqaStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let sc = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts: Proposition1Options = if options_json.is_null() {
            Proposition1Options::default()
        } else {
            serde_json::from_str(read_str(options_json, "options_json")?)
                .map_err(|e| (SqaStatus::InvalidInput, e.to_string()))?
        };
        let r = core(check_proposition1(&sc.schedule, &s.sys, &opts))?;
        write_string(out, to_json(&r)?)
    })
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
