//! C ABI over the orchestrator.
//!
//! Every function returns an [`OocranStatus`]; on failure the message is
//! available from [`oocran_last_error_message`] on the same thread.
//! Engines are opaque handles created by [`oocran_engine_new`] and released
//! with [`oocran_engine_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oocran::engine::{EngineError, Orchestrator};
use oocran::ids::NsId;
use oocran::model::{NsDescriptor, NsState};
use oocran::planner::{estimate_setup_time, plan_vwi, TimeModel, VwiDescriptor};
use oocran::rf;
use oocran::scenario::Scenario;
use oocran::time::ClockMode;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OocranStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    NotFound = 5,
    Conflict = 6,
    Capacity = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OocranNsState {
    Pending = 0,
    Deploying = 1,
    Active = 2,
    Reconfiguring = 3,
    Terminating = 4,
    Terminated = 5,
    Failed = 6,
}

impl From<NsState> for OocranNsState {
    fn from(s: NsState) -> Self {
        match s {
            NsState::Pending => OocranNsState::Pending,
            NsState::Deploying => OocranNsState::Deploying,
            NsState::Active => OocranNsState::Active,
            NsState::Reconfiguring => OocranNsState::Reconfiguring,
            NsState::Terminating => OocranNsState::Terminating,
            NsState::Terminated => OocranNsState::Terminated,
            NsState::Failed => OocranNsState::Failed,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OocranLinkBudget {
    pub path_loss_db: f64,
    pub rx_power_dbm: f64,
    pub noise_dbm: f64,
    pub snr_db: f64,
    pub operational: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OocranPlan {
    pub n_enodebs: u32,
    pub covered_area_m2: f64,
    pub estimated_setup_s: f64,
}

/// Opaque engine handle. Not thread-safe; use one handle per thread or lock.
pub struct OocranEngine {
    inner: Orchestrator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(OocranStatus, String);

impl Failure {
    fn new(status: OocranStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        use EngineError::*;
        let status = match &e {
            ValidationFailed(_) | ImmutableField(_) | InvalidPatch(_) | Planner(_) => OocranStatus::InvalidArgument,
            UnknownNs(_) | UnknownVnf(_) | UnknownActuator(_) | UnknownAlarm(_) | UnknownSwap(_) => OocranStatus::NotFound,
            IllegalTransition(_) | DuplicateActuator(_) | NsNotActive { .. } | SwapTooSoon { .. } => OocranStatus::Conflict,
            QuotaExceeded(_) | InsufficientCapacity(_) | Vim(_) | Rf(_) => OocranStatus::Capacity,
            Queue(_) => OocranStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OocranStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OocranStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside liboocran".into());
            OocranStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(OocranStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn engine_ref<'a>(p: *mut OocranEngine) -> Result<&'a mut OocranEngine, Failure> {
    out_ref(p, "engine")
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(OocranStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(OocranStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

fn rf_err(e: rf::RfError) -> Failure {
    Failure::new(OocranStatus::InvalidArgument, e)
}

fn time_model(linear: bool) -> TimeModel {
    if linear {
        TimeModel::reference_linear()
    } else {
        TimeModel::reference_table()
    }
}

/// Message of the last failed call on this thread, or NULL.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn oocran_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn oocran_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn oocran_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Free-space path loss in dB.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn oocran_fspl_db(distance_m: f64, frequency_hz: f64, out: *mut f64) -> OocranStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = rf::fspl_db(distance_m, frequency_hz).map_err(rf_err)?;
        Ok(())
    })
}

/// Line-of-sight link budget.
///
/// # Safety
/// `out` must be a valid pointer to an `OocranLinkBudget`.
#[no_mangle]
pub unsafe extern "C" fn oocran_link_budget(
    tx_power_dbm: f64,
    frequency_hz: f64,
    distance_m: f64,
    bandwidth_hz: f64,
    snr_threshold_db: f64,
    out: *mut OocranLinkBudget,
) -> OocranStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let lb = rf::link_budget(tx_power_dbm, frequency_hz, distance_m, bandwidth_hz, snr_threshold_db).map_err(rf_err)?;
        *out = OocranLinkBudget {
            path_loss_db: lb.tx_power_dbm - lb.rx_power_dbm,
            rx_power_dbm: lb.rx_power_dbm,
            noise_dbm: lb.noise_dbm,
            snr_db: lb.snr_db,
            operational: lb.operational,
        };
        Ok(())
    })
}

/// Estimated seconds until a service of `n_enodebs` eNodeBs is ACTIVE,
/// using the reference table or, when `linear` is set, its linear fit.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn oocran_estimate_setup_time(n_enodebs: u32, linear: bool, out: *mut f64) -> OocranStatus {
    guard(|| {
        *out_ref(out, "out")? = estimate_setup_time(n_enodebs, &time_model(linear));
        Ok(())
    })
}

/// Sizes a VWI covering `target_area_m2` with cells of `cell_radius_m`.
///
/// # Safety
/// `out` must be a valid pointer to an `OocranPlan`.
#[no_mangle]
pub unsafe extern "C" fn oocran_plan(
    target_area_m2: f64,
    cell_radius_m: f64,
    linear: bool,
    out: *mut OocranPlan,
) -> OocranStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mut vwi = VwiDescriptor::new("ffi", target_area_m2);
        vwi.cell_radius_m = cell_radius_m;
        let plan = plan_vwi(&vwi, &time_model(linear)).map_err(|e| Failure::new(OocranStatus::InvalidArgument, e))?;
        *out = OocranPlan {
            n_enodebs: plan.n_enodebs,
            covered_area_m2: plan.covered_area_m2,
            estimated_setup_s: plan.estimated_setup_s,
        };
        Ok(())
    })
}

/// Creates an engine on a simulated infrastructure.
/// `scenario_toml` may be NULL for the default infrastructure; it must use
/// the VIRTUAL clock. Its `actions` are ignored.
///
/// # Safety
/// `scenario_toml` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_new(scenario_toml: *const c_char, out: *mut *mut OocranEngine) -> OocranStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let sc = if scenario_toml.is_null() {
            Scenario::default()
        } else {
            Scenario::from_toml_str(text(scenario_toml, "scenario_toml")?)
                .map_err(|e| Failure::new(OocranStatus::Parse, e))?
        };
        if sc.clock.mode != ClockMode::Virtual {
            return Err(Failure::new(OocranStatus::InvalidArgument, "engine handles need a VIRTUAL clock"));
        }
        let inner = sc
            .build_orchestrator()
            .map_err(|e| Failure::new(OocranStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(OocranEngine { inner }));
        Ok(())
    })
}

/// Releases an engine. NULL is a no-op.
///
/// # Safety
/// `engine` must come from `oocran_engine_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_free(engine: *mut OocranEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Submits a service descriptor (TOML, or JSON when it starts with `{`).
/// The service starts DEPLOYING; advance time to bring it up.
///
/// # Safety
/// `engine` and `out_ns_id` must be valid; `descriptor` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_deploy(
    engine: *mut OocranEngine,
    descriptor: *const c_char,
    out_ns_id: *mut u64,
) -> OocranStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let out = out_ref(out_ns_id, "out_ns_id")?;
        let src = text(descriptor, "descriptor")?;
        let desc = if src.trim_start().starts_with('{') {
            NsDescriptor::from_json_str(src)
        } else {
            NsDescriptor::from_toml_str(src)
        }
        .map_err(|e| Failure::new(OocranStatus::Parse, e))?;
        *out = e.inner.create_ns(desc)?.0;
        Ok(())
    })
}

/// Starts tearing a service down.
///
/// # Safety
/// `engine` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_delete(engine: *mut OocranEngine, ns_id: u64) -> OocranStatus {
    guard(|| {
        engine_ref(engine)?.inner.delete_ns(NsId(ns_id))?;
        Ok(())
    })
}

/// Advances virtual time by `dt_s` seconds, running due work.
///
/// # Safety
/// `engine` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_advance(engine: *mut OocranEngine, dt_s: f64) -> OocranStatus {
    guard(|| {
        if !dt_s.is_finite() || dt_s < 0.0 {
            return Err(Failure::new(OocranStatus::InvalidArgument, format!("dt_s must be non-negative, got {dt_s}")));
        }
        engine_ref(engine)?.inner.advance(dt_s)?;
        Ok(())
    })
}

/// Runs until no work is pending. Writes the resulting time if `out_now_s` is not NULL.
///
/// # Safety
/// `engine` must be valid; `out_now_s` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_run_until_settled(engine: *mut OocranEngine, out_now_s: *mut f64) -> OocranStatus {
    guard(|| {
        let t = engine_ref(engine)?.inner.run_until_settled()?;
        if let Some(out) = out_now_s.as_mut() {
            *out = t.as_secs_f64();
        }
        Ok(())
    })
}

/// Current virtual time in seconds.
///
/// # Safety
/// `engine` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_now(engine: *mut OocranEngine, out: *mut f64) -> OocranStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        *out_ref(out, "out")? = e.inner.now().as_secs_f64();
        Ok(())
    })
}

/// Lifecycle state of a service.
///
/// # Safety
/// `engine` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_ns_state(
    engine: *mut OocranEngine,
    ns_id: u64,
    out: *mut OocranNsState,
) -> OocranStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let out = out_ref(out, "out")?;
        let ns = e.inner.ns(NsId(ns_id)).ok_or(EngineError::UnknownNs(NsId(ns_id)))?;
        *out = ns.state.into();
        Ok(())
    })
}

/// Infrastructure snapshot as JSON. Free the string with `oocran_string_free`.
///
/// # Safety
/// `engine` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn oocran_engine_infrastructure_json(engine: *mut OocranEngine, out: *mut *mut c_char) -> OocranStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let out = out_ref(out, "out")?;
        let json = serde_json::to_string(&e.inner.infrastructure()).map_err(|e| Failure::new(OocranStatus::Internal, e))?;
        *out = CString::new(json).map_err(|e| Failure::new(OocranStatus::Internal, e))?.into_raw();
        Ok(())
    })
}
