//! C ABI for the rigid-body and heavy-top integrators.
//!
//! Integrators are opaque handles created by `gi_*_new` and released by
//! `gi_*_free`. Every fallible call returns a [`GiStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`gi_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use geoint::actiongroupoid::{heavy_top_model, ActionHamiltonianStepper, ActionState, ActionSystem, HeavyTop};
use geoint::algebra::AlgebraDescriptor;
use geoint::compose::{strang_pair, triple_jump, DynStep};
use geoint::liepoisson::{LPState, LieHamiltonian, LpHamiltonianStepper, RigidBody};
use geoint::retractions::{cayley_retraction, exp_retraction, RetractionMap};
use geoint::solver::SolverConfig;
use geoint::GeoError;
use nalgebra::DVector;

/// Result codes of the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Convergence = 4,
    LinearSolve = 5,
    Domain = 6,
    Membership = 7,
    Panic = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiRetraction {
    Exp = 0,
    Cayley = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiMethod {
    Base = 0,
    Adjoint = 1,
    Strang = 2,
    TripleJump = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GeoError) -> GiStatus {
    match e {
        GeoError::Dimension { .. } => GiStatus::Dimension,
        GeoError::Convergence { .. } => GiStatus::Convergence,
        GeoError::LinearSolve(_) | GeoError::SingularHessian(_) => GiStatus::LinearSolve,
        GeoError::Domain(_) => GiStatus::Domain,
        GeoError::Membership(_) => GiStatus::Membership,
        GeoError::Parameter(_) | GeoError::Tolerance(_) => GiStatus::InvalidArgument,
        GeoError::UnsupportedRealization(_) | GeoError::UnsupportedMap(_) => GiStatus::Internal,
    }
}

fn fail(e: GeoError) -> GiStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard<F: FnOnce() -> GiStatus>(f: F) -> GiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == GiStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => {
            set_error("panic inside geoint".into());
            GiStatus::Panic
        }
    }
}

macro_rules! require {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            set_error(format!("null pointer: {}", stringify!($p)));
            return GiStatus::NullPointer;
        })+
    };
}

unsafe fn read3(p: *const f64) -> [f64; 3] {
    let s = std::slice::from_raw_parts(p, 3);
    [s[0], s[1], s[2]]
}

unsafe fn write(p: *mut f64, v: &[f64]) {
    std::slice::from_raw_parts_mut(p, v.len()).copy_from_slice(v);
}

fn retraction(kind: GiRetraction, alg: Arc<AlgebraDescriptor>) -> geoint::Result<RetractionMap> {
    match kind {
        GiRetraction::Exp => exp_retraction(alg),
        GiRetraction::Cayley => cayley_retraction(alg),
    }
}

fn wrap<S: geoint::compose::PhaseState>(base: DynStep<S>, method: GiMethod) -> geoint::Result<DynStep<S>> {
    Ok(match method {
        GiMethod::Base => base,
        GiMethod::Adjoint => base.adjoint()?,
        GiMethod::Strang => Arc::new(strang_pair(base)?),
        GiMethod::TripleJump => Arc::new(triple_jump(base)?),
    })
}

/// Opaque rigid-body Lie-Poisson integrator.
pub struct GiRigidBody {
    model: Arc<RigidBody>,
    step: DynStep<LPState>,
    state: LPState,
}

/// Opaque heavy-top integrator.
pub struct GiHeavyTop {
    model: Arc<HeavyTop>,
    step: DynStep<ActionState>,
    state: ActionState,
}

/// Creates a rigid-body integrator with principal moments `inertia[3]` and
/// initial body momentum `mu0[3]`. The rotation starts at the identity.
///
/// # Safety
/// `inertia` and `mu0` must point to three doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_new(
    inertia: *const f64,
    mu0: *const f64,
    retraction_kind: GiRetraction,
    method: GiMethod,
    out: *mut *mut GiRigidBody,
) -> GiStatus {
    require!(inertia, mu0, out);
    guard(|| {
        let build = || -> geoint::Result<GiRigidBody> {
            let model = Arc::new(RigidBody::new(read3(inertia))?);
            let alg = model.algebra().clone();
            let base: DynStep<LPState> = Arc::new(LpHamiltonianStepper {
                model: model.clone(),
                tau: retraction(retraction_kind, alg.clone())?,
                solver: SolverConfig::default(),
            });
            let state = LPState::new(alg.clone(), DVector::from_column_slice(&read3(mu0)))?.with_group(alg.identity()?)?;
            Ok(GiRigidBody {
                model,
                step: wrap(base, method)?,
                state,
            })
        };
        match build() {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                GiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Advances `steps` steps of size `h`. On failure the state is left at the last
/// successful step.
///
/// # Safety
/// `handle` must come from [`gi_rigid_body_new`].
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_step(handle: *mut GiRigidBody, h: f64, steps: u64) -> GiStatus {
    require!(handle);
    let rb = &mut *handle;
    guard(|| {
        for _ in 0..steps {
            match rb.step.step(&rb.state, h) {
                Ok((s, _)) => rb.state = s,
                Err(e) => return fail(e),
            }
        }
        GiStatus::Ok
    })
}

/// Copies the body momentum into `mu[3]`.
///
/// # Safety
/// `handle` must be valid and `mu` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_momentum(handle: *const GiRigidBody, mu: *mut f64) -> GiStatus {
    require!(handle, mu);
    write(mu, (*handle).state.mu().as_slice());
    GiStatus::Ok
}

/// Copies the reconstructed rotation, row-major, into `r[9]`.
///
/// # Safety
/// `handle` must be valid and `r` must point to nine writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_rotation(handle: *const GiRigidBody, r: *mut f64) -> GiStatus {
    require!(handle, r);
    let Some(g) = &(*handle).state.g else {
        set_error("rotation is not tracked".into());
        return GiStatus::Internal;
    };
    let m = g.matrix();
    let rows: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| m[(i, j)])).collect();
    write(r, &rows);
    GiStatus::Ok
}

/// Energy, Casimir `|mu|^2` and time of the current state.
///
/// # Safety
/// `handle` must be valid; each non-null output must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_invariants(
    handle: *const GiRigidBody,
    energy: *mut f64,
    casimir: *mut f64,
    time: *mut f64,
) -> GiStatus {
    require!(handle);
    let rb = &*handle;
    if !energy.is_null() {
        *energy = rb.model.energy(rb.state.mu());
    }
    if !casimir.is_null() {
        *casimir = RigidBody::casimir(rb.state.mu());
    }
    if !time.is_null() {
        *time = rb.state.t;
    }
    GiStatus::Ok
}

/// # Safety
/// `handle` must come from [`gi_rigid_body_new`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gi_rigid_body_free(handle: *mut GiRigidBody) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Creates a heavy-top integrator. `axis[3]` must be a unit vector.
///
/// # Safety
/// `inertia`, `axis`, `q0`, `mu0` must point to three doubles each; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gi_heavy_top_new(
    inertia: *const f64,
    mass: f64,
    gravity: f64,
    lever: f64,
    axis: *const f64,
    q0: *const f64,
    mu0: *const f64,
    retraction_kind: GiRetraction,
    method: GiMethod,
    out: *mut *mut GiHeavyTop,
) -> GiStatus {
    require!(inertia, axis, q0, mu0, out);
    guard(|| {
        let build = || -> geoint::Result<GiHeavyTop> {
            let model = Arc::new(heavy_top_model(read3(inertia), mass, gravity, lever, read3(axis))?);
            let alg = model.algebra().clone();
            let base: DynStep<ActionState> = Arc::new(ActionHamiltonianStepper {
                model: model.clone(),
                tau: retraction(retraction_kind, alg.clone())?,
                solver: SolverConfig::default(),
            });
            let state = ActionState::new(
                alg,
                DVector::from_column_slice(&read3(q0)),
                DVector::from_column_slice(&read3(mu0)),
            )?;
            Ok(GiHeavyTop {
                model,
                step: wrap(base, method)?,
                state,
            })
        };
        match build() {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                GiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `handle` must come from [`gi_heavy_top_new`].
#[no_mangle]
pub unsafe extern "C" fn gi_heavy_top_step(handle: *mut GiHeavyTop, h: f64, steps: u64) -> GiStatus {
    require!(handle);
    let top = &mut *handle;
    guard(|| {
        for _ in 0..steps {
            match top.step.step(&top.state, h) {
                Ok((s, _)) => top.state = s,
                Err(e) => return fail(e),
            }
        }
        GiStatus::Ok
    })
}

/// Copies `q[3]` and `mu[3]`; either output may be null.
///
/// # Safety
/// `handle` must be valid; non-null outputs must hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn gi_heavy_top_state(handle: *const GiHeavyTop, q: *mut f64, mu: *mut f64) -> GiStatus {
    require!(handle);
    let top = &*handle;
    if !q.is_null() {
        write(q, top.state.q.as_slice());
    }
    if !mu.is_null() {
        write(mu, top.state.mu().as_slice());
    }
    GiStatus::Ok
}

/// Energy, the Casimirs `|q|^2` and `q . mu` (into `casimirs[2]`), and time.
///
/// # Safety
/// `handle` must be valid; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_heavy_top_invariants(
    handle: *const GiHeavyTop,
    energy: *mut f64,
    casimirs: *mut f64,
    time: *mut f64,
) -> GiStatus {
    require!(handle);
    let top = &*handle;
    if !energy.is_null() {
        *energy = top.model.energy(&top.state.q, top.state.mu());
    }
    if !casimirs.is_null() {
        write(casimirs, &top.model.casimirs(&top.state.q, top.state.mu()));
    }
    if !time.is_null() {
        *time = top.state.t;
    }
    GiStatus::Ok
}

/// # Safety
/// `handle` must come from [`gi_heavy_top_new`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gi_heavy_top_free(handle: *mut GiHeavyTop) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Copies the last error message of this thread, NUL-terminated, into `buf`
/// (truncating to `len - 1` bytes). Returns the full message length without the
/// terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be writable for `len` bytes, or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn gi_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
