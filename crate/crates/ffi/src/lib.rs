//! C ABI for the dualmarket simulator.
//!
//! Scenarios and trajectories are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible function
//! returns a `DM_*` status code; on failure the message is available from
//! [`dm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dualmarket::dynamics::StepRecord;
use dualmarket::equilibrium::{compare_regimes, run_to_steady_state, SteadyStateReport};
use dualmarket::plm::DeltaSchedule;
use dualmarket::{Error, HiringRegime, Scenario};

pub const DM_OK: i32 = 0;
pub const DM_ERR_NULL: i32 = 1;
pub const DM_ERR_UTF8: i32 = 2;
pub const DM_ERR_CONFIG: i32 = 3;
/// Parameter outside its valid domain.
pub const DM_ERR_DOMAIN: i32 = 4;
/// Root finding, inversion or iteration failed.
pub const DM_ERR_NUMERIC: i32 = 5;
pub const DM_ERR_IO: i32 = 6;
pub const DM_ERR_INDEX: i32 = 7;
pub const DM_ERR_PANIC: i32 = 8;

pub const DM_REGIME_BLIND: i32 = 1;
pub const DM_REGIME_STATDISC: i32 = 2;

/// Opaque scenario handle.
pub struct DmScenario(Scenario);

/// Opaque handle to a completed deterministic run.
pub struct DmTrajectory {
    records: Vec<StepRecord>,
    report: SteadyStateReport,
}

/// One trajectory period; `*_b` / `*_w` are the two groups.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DmRow {
    pub t: u64,
    pub g_b: f64,
    pub g_w: f64,
    pub pi_b: f64,
    pub pi_w: f64,
    pub gamma_b: f64,
    pub gamma_w: f64,
    pub w: f64,
    pub eta_hat_b: f64,
    pub eta_hat_w: f64,
    pub k_b: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DmSteadyState {
    pub converged: i32,
    /// First converged step, or -1.
    pub t_convergence: i64,
    pub steps: u64,
    pub g_b: f64,
    pub g_w: f64,
    pub pi_b: f64,
    pub pi_w: f64,
    pub w: f64,
    pub symmetric: i32,
    pub empirical_lipschitz: f64,
    pub residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DmVerdict {
    pub applicable: i32,
    pub ordering_holds: i32,
    pub dominates: i32,
    pub theta_tilde_w: f64,
    pub theta_bar: f64,
    pub theta_tilde_b: f64,
    pub theta_hat_q: f64,
    pub group_b_better_off_mass: f64,
    pub group_w_worse_off_mass: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => DM_ERR_CONFIG,
        Error::Io(_) => DM_ERR_IO,
        Error::OrderingViolation(_) | Error::RangeViolation(_) | Error::NegativeSupply(_) => DM_ERR_DOMAIN,
        Error::NonInvertible(_)
        | Error::RootNotBracketed { .. }
        | Error::DegenerateLikelihood(_)
        | Error::CutoffUnreachable(_)
        | Error::HorizonTooLarge { .. }
        | Error::NonConvergence { .. } => DM_ERR_NUMERIC,
    }
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DM_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DM_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DM_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DM_ERR_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(DM_ERR_NULL, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(DM_ERR_NULL, format!("{name} is null")))
}

fn scenario_out(out: &mut *mut DmScenario, s: Scenario) {
    *out = Box::into_raw(Box::new(DmScenario(s)));
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a scenario with default parameters.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_new(out: *mut *mut DmScenario) -> i32 {
    guard(|| {
        scenario_out(out_arg(out, "out")?, Scenario::default());
        Ok(())
    })
}

/// Parses scenario text (`key = value` lines).
///
/// # Safety
/// `text` must be null or a nul-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_from_str(text: *const c_char, out: *mut *mut DmScenario) -> i32 {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        scenario_out(out, Scenario::parse(text, "<string>")?);
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be null or a nul-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_load(path: *const c_char, out: *mut *mut DmScenario) -> i32 {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        scenario_out(out, Scenario::load(Path::new(path))?);
        Ok(())
    })
}

/// Sets one key; the scenario is unchanged if the result would be invalid.
///
/// # Safety
/// `s` must be null or a live handle; `key` and `value` null or
/// nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_set(s: *mut DmScenario, key: *const c_char, value: *const c_char) -> i32 {
    guard(|| {
        let s = out_arg(s, "scenario")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let mut next = s.0.clone();
        next.apply_overrides(&[(key.to_string(), value.to_string())])?;
        s.0 = next;
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_scenario_free(s: *mut DmScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn run(s: &Scenario) -> Result<DmTrajectory, Failure> {
    let (traj, report) = run_to_steady_state(&s.model, &s.hiring_regime(), &s.dynamics, s.init_g, &s.run)?;
    Ok(DmTrajectory {
        records: traj.records,
        report,
    })
}

fn steady_state_of(r: &SteadyStateReport) -> DmSteadyState {
    DmSteadyState {
        converged: r.converged as i32,
        t_convergence: r.t_convergence.map_or(-1, |t| t as i64),
        steps: r.steps,
        g_b: r.g_tilde[0],
        g_w: r.g_tilde[1],
        pi_b: r.pi_tilde[0],
        pi_w: r.pi_tilde[1],
        w: r.w_tilde,
        symmetric: r.symmetric as i32,
        empirical_lipschitz: r.empirical_lipschitz,
        residual: r.residual,
    }
}

/// Iterates the scenario's regime to its steady state. Non-convergence is
/// reported through `converged`, not as an error.
///
/// # Safety
/// `s` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_run_steady_state(s: *const DmScenario, out: *mut DmSteadyState) -> i32 {
    guard(|| {
        let s = ref_arg(s, "scenario")?;
        let out = out_arg(out, "out")?;
        *out = steady_state_of(&run(&s.0)?.report);
        Ok(())
    })
}

/// Runs the scenario and keeps every period.
///
/// # Safety
/// `s` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_run(s: *const DmScenario, out: *mut *mut DmTrajectory) -> i32 {
    guard(|| {
        let s = ref_arg(s, "scenario")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(run(&s.0)?));
        Ok(())
    })
}

/// Number of periods; 0 for null.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_len(t: *const DmTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.records.len())
}

/// Copies period `index` into `out`.
///
/// # Safety
/// `t` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_row(t: *const DmTrajectory, index: usize, out: *mut DmRow) -> i32 {
    guard(|| {
        let t = ref_arg(t, "trajectory")?;
        let out = out_arg(out, "out")?;
        let r = t.records.get(index).ok_or_else(|| {
            Failure(DM_ERR_INDEX, format!("row {index} out of range (len {})", t.records.len()))
        })?;
        *out = DmRow {
            t: r.t,
            g_b: r.g[0],
            g_w: r.g[1],
            pi_b: r.pi[0],
            pi_w: r.pi[1],
            gamma_b: r.gamma[0],
            gamma_w: r.gamma[1],
            w: r.w,
            eta_hat_b: r.thresholds.eta_hat_b,
            eta_hat_w: r.thresholds.eta_hat_w,
            k_b: r.thresholds.k_b,
        };
        Ok(())
    })
}

/// Steady-state summary of a finished trajectory.
///
/// # Safety
/// `t` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_report(t: *const DmTrajectory, out: *mut DmSteadyState) -> i32 {
    guard(|| {
        let t = ref_arg(t, "trajectory")?;
        *out_arg(out, "out")? = steady_state_of(&t.report);
        Ok(())
    })
}

/// Releases a trajectory. Null is ignored.
///
/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_trajectory_free(t: *mut DmTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Compares parity against `DM_REGIME_BLIND` or `DM_REGIME_STATDISC` on the
/// scenario's parameters.
///
/// # Safety
/// `s` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_compare(s: *const DmScenario, regime: i32, out: *mut DmVerdict) -> i32 {
    guard(|| {
        let s = &ref_arg(s, "scenario")?.0;
        let out = out_arg(out, "out")?;
        let unconstrained = match regime {
            DM_REGIME_BLIND => HiringRegime::GroupBlind,
            DM_REGIME_STATDISC => HiringRegime::StatisticalDiscrimination(s.statdisc),
            other => return Err(Failure(DM_ERR_DOMAIN, format!("unknown regime code {other}"))),
        };
        let v = compare_regimes(&s.model, &unconstrained, &s.dynamics, s.init_g, &s.run)?;
        *out = DmVerdict {
            applicable: v.applicable as i32,
            ordering_holds: v.ordering_holds as i32,
            dominates: v.dominates as i32,
            theta_tilde_w: v.theta_ordering[0],
            theta_bar: v.theta_ordering[1],
            theta_tilde_b: v.theta_ordering[2],
            theta_hat_q: v.theta_hat_q,
            group_b_better_off_mass: v.group_b_better_off_mass,
            group_w_worse_off_mass: v.group_w_worse_off_mass,
        };
        Ok(())
    })
}

/// Forgiveness buffer after `t` observed periods with constant `c`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_delta(t: u32, c: f64, out: *mut f64) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let schedule = DeltaSchedule { c };
        schedule.validate()?;
        *out = schedule.delta(t);
        Ok(())
    })
}

/// Wage offered when a share `g` of the population is good workers.
///
/// # Safety
/// `s` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dm_wage(s: *const DmScenario, g: f64, out: *mut f64) -> i32 {
    guard(|| {
        let s = ref_arg(s, "scenario")?;
        let out = out_arg(out, "out")?;
        *out = s.0.model.wage(g)?;
        Ok(())
    })
}
