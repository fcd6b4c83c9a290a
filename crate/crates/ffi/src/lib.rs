//! C ABI over the `qmetro` engine.
//!
//! Every fallible call returns a [`QmStatus`]; on failure the message is kept
//! per thread and read back with [`qm_last_error_message`]. Systems are opaque
//! handles created by [`qm_system_new`] and released by [`qm_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use qmetro::analytics::closed_form;
use qmetro::dynamics::TimeGrid;
use qmetro::estimation::{
    qfi_curves, steady_probe_qfi, EstimationTarget, SteadyDerivativeMethod, Subsystem,
};
use qmetro::nonmarkov::{backflow, saturation_run, SaturationOptions};
use qmetro::state::density_from_bloch;
use qmetro::{BlochVector, DensityMatrix, Error, InteractionKind, SystemParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    DegenerateSteadyState = 4,
    Internal = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmInteraction {
    Xx = 0,
    XxPlusZx = 1,
    Zx = 2,
    Xz = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmTarget {
    Temperature = 0,
    AncillaFrequency = 1,
    BathCoupling = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmSubsystem {
    Probe = 0,
    Ancilla = 1,
    Full = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmParams {
    pub omega_p: f64,
    pub omega_a: f64,
    pub g: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub interaction: QmInteraction,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QmClosedForm {
    pub delta_p: f64,
    pub f_t: f64,
    pub f_wa: f64,
    pub f_gamma: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QmSaturation {
    pub saturation: f64,
    pub horizon: f64,
    pub last_decade_change: f64,
    pub saturated: bool,
}

/// Parameters plus the probe and ancilla initial states.
pub struct QmSystem {
    params: SystemParams,
    probe: DensityMatrix,
    ancilla: DensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QmStatus {
    match e.root() {
        Error::DegenerateSteadyState { .. } => QmStatus::DegenerateSteadyState,
        root => match root.exit_code() {
            2 => QmStatus::InvalidArgument,
            3 => QmStatus::Numerical,
            _ => QmStatus::Internal,
        },
    }
}

fn fail(status: QmStatus, message: impl Into<String>) -> QmStatus {
    set_last_error(message.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), QmStatus>) -> QmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            QmStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(QmStatus::Panic, format!("panic: {what}"))
        }
    }
}

fn check<T>(r: qmetro::Result<T>) -> Result<T, QmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), QmStatus> {
    if p.is_null() {
        Err(fail(QmStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn system<'a>(handle: *const QmSystem) -> Result<&'a QmSystem, QmStatus> {
    non_null(handle, "system")?;
    Ok(&*handle)
}

unsafe fn grid_from(ptr: *const f64, len: usize) -> Result<TimeGrid, QmStatus> {
    non_null(ptr, "times")?;
    check(TimeGrid::new(slice::from_raw_parts(ptr, len).to_vec()))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], QmStatus> {
    non_null(ptr, name)?;
    Ok(slice::from_raw_parts_mut(ptr, len))
}

impl From<QmInteraction> for InteractionKind {
    fn from(k: QmInteraction) -> Self {
        match k {
            QmInteraction::Xx => InteractionKind::XX,
            QmInteraction::XxPlusZx => InteractionKind::XXplusZX,
            QmInteraction::Zx => InteractionKind::ZX,
            QmInteraction::Xz => InteractionKind::XZ,
        }
    }
}

impl From<QmTarget> for EstimationTarget {
    fn from(t: QmTarget) -> Self {
        match t {
            QmTarget::Temperature => EstimationTarget::Temperature,
            QmTarget::AncillaFrequency => EstimationTarget::AncillaFrequency,
            QmTarget::BathCoupling => EstimationTarget::BathCoupling,
        }
    }
}

impl From<QmSubsystem> for Subsystem {
    fn from(s: QmSubsystem) -> Self {
        match s {
            QmSubsystem::Probe => Subsystem::Probe,
            QmSubsystem::Ancilla => Subsystem::Ancilla,
            QmSubsystem::Full => Subsystem::Full,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL,
/// or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Validate `params` and create a system with the probe in `|g>` and the
/// ancilla in `|e>`.
///
/// # Safety
/// `params` must point to a valid `QmParams`; `out` to writable storage for a
/// handle, which must later be released with `qm_system_free`.
#[no_mangle]
pub unsafe extern "C" fn qm_system_new(
    params: *const QmParams,
    out: *mut *mut QmSystem,
) -> QmStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let q = &*params;
        let p = SystemParams {
            omega_p: q.omega_p,
            omega_a: q.omega_a,
            g: q.g,
            gamma: q.gamma,
            temperature: q.temperature,
            interaction: q.interaction.into(),
        };
        check(p.validate())?;
        let sys = QmSystem {
            params: p,
            probe: DensityMatrix::ground(),
            ancilla: DensityMatrix::excited(),
        };
        *out = Box::into_raw(Box::new(sys));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a handle from `qm_system_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qm_system_free(handle: *mut QmSystem) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Set the initial probe and ancilla states from Bloch vectors (`|r| <= 1`).
///
/// # Safety
/// `handle` must be a live handle; `probe` and `ancilla` must each point to
/// three readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qm_system_set_initial_state(
    handle: *mut QmSystem,
    probe: *const f64,
    ancilla: *const f64,
) -> QmStatus {
    guard(|| {
        non_null(handle, "system")?;
        non_null(probe, "probe")?;
        non_null(ancilla, "ancilla")?;
        let state = |p: *const f64| {
            let r = slice::from_raw_parts(p, 3);
            BlochVector::new(r[0], r[1], r[2])
                .and_then(|b| density_from_bloch(&b))
                .map_err(|e| fail(QmStatus::InvalidArgument, e.to_string()))
        };
        let (probe, ancilla) = (state(probe)?, state(ancilla)?);
        let sys = &mut *handle;
        sys.probe = probe;
        sys.ancilla = ancilla;
        Ok(())
    })
}

/// Closed-form stationary splitting and probe QFIs (XX only).
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_steady_closed_form(
    handle: *const QmSystem,
    out: *mut QmClosedForm,
) -> QmStatus {
    guard(|| {
        let sys = system(handle)?;
        non_null(out, "out")?;
        let c = check(closed_form(&sys.params))?;
        *out = QmClosedForm {
            delta_p: c.delta_p,
            f_t: c.f_t,
            f_wa: c.f_wa,
            f_gamma: c.f_gamma,
        };
        Ok(())
    })
}

/// Probe QFI of the numerically computed stationary state.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_steady_probe_qfi(
    handle: *const QmSystem,
    target: QmTarget,
    out: *mut f64,
) -> QmStatus {
    guard(|| {
        let sys = system(handle)?;
        non_null(out, "out")?;
        *out = check(steady_probe_qfi(
            &sys.params,
            target.into(),
            SteadyDerivativeMethod::LinearResponse,
        ))?
        .qfi;
        Ok(())
    })
}

/// QFI of one subsystem at each of `len` sample times (strictly increasing,
/// starting at 0), written to `out`.
///
/// # Safety
/// `handle` must be a live handle; `times` must point to `len` readable and
/// `out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qm_qfi_curve(
    handle: *const QmSystem,
    target: QmTarget,
    subsystem: QmSubsystem,
    times: *const f64,
    len: usize,
    out: *mut f64,
) -> QmStatus {
    guard(|| {
        let sys = system(handle)?;
        let grid = grid_from(times, len)?;
        let out = output(out, len, "out")?;
        let rho0 = sys.probe.tensor(&sys.ancilla);
        let curve = check(qfi_curves(
            &sys.params,
            target.into(),
            &rho0,
            &grid,
            &[subsystem.into()],
        ))?
        .remove(0);
        out.copy_from_slice(&curve.values);
        Ok(())
    })
}

/// Trace distance `D(t)` of the `|+>, |->` probe pair and the cumulative
/// backflow `N(t)` on the given times; the system's ancilla state is used.
///
/// # Safety
/// `handle` must be a live handle; `times` must point to `len` readable and
/// `distance`, `n_cumulative` to `len` writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn qm_backflow(
    handle: *const QmSystem,
    times: *const f64,
    len: usize,
    distance: *mut f64,
    n_cumulative: *mut f64,
) -> QmStatus {
    guard(|| {
        let sys = system(handle)?;
        let grid = grid_from(times, len)?;
        let distance = output(distance, len, "distance")?;
        let n_cumulative = output(n_cumulative, len, "n_cumulative")?;
        let curve = check(backflow(&sys.params, &sys.ancilla, &grid))?;
        distance.copy_from_slice(&curve.distance);
        n_cumulative.copy_from_slice(&curve.n_cumulative);
        Ok(())
    })
}

/// Saturated backflow with the default step and horizon schedule.
///
/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_backflow_saturation(
    handle: *const QmSystem,
    out: *mut QmSaturation,
) -> QmStatus {
    guard(|| {
        let sys = system(handle)?;
        non_null(out, "out")?;
        let run = check(saturation_run(
            &sys.params,
            &sys.ancilla,
            &SaturationOptions::default(),
        ))?;
        *out = QmSaturation {
            saturation: run.saturation(),
            horizon: run.horizon,
            last_decade_change: run.last_decade_change,
            saturated: run.saturated,
        };
        Ok(())
    })
}
