//! C ABI for the apflow solver.
//!
//! A simulation is an opaque handle created from a case name or a TOML
//! configuration, advanced step by step or to a target time, and queried by
//! copying cell fields into caller-owned buffers. Every fallible call returns
//! an [`ApflowStatus`]; the message of the most recent failure on the calling
//! thread is available from [`apflow_last_error_message`].
//!
//! Handles are not synchronised: use one handle per thread or lock externally.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use apflow::cases::CaseSpec;
use apflow::config::RunConfig;
use apflow::diagnostics::{cell_velocity, record};
use apflow::fields::{init_state, State};
use apflow::mesh::Mesh;
use apflow::stepper::{step, StepperConfig};
use apflow::Error;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInitialData = 3,
    CflViolation = 4,
    NonlinearSolver = 5,
    LinearSolver = 6,
    Domain = 7,
    Unsupported = 8,
    BufferTooSmall = 9,
    Io = 10,
    Panic = 11,
}

/// Cell-centred fields that can be copied out of a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApflowField {
    Density = 0,
    PotentialTemperature = 1,
    /// The product `rho theta`.
    TotalPotentialTemperature = 2,
    /// Mean of the two bounding face velocities along x.
    VelocityX = 3,
    /// Mean of the two bounding face velocities along y; 2D only.
    VelocityY = 4,
}

/// Scalar diagnostics of the current state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApflowDiagnostics {
    pub time: f64,
    pub step: u64,
    pub mass: f64,
    pub theta_total: f64,
    pub kinetic_energy: f64,
    /// NaN when the internal energy is undefined (`gamma = 1`).
    pub total_energy: f64,
    pub theta_total_deviation: f64,
    pub max_div_u: f64,
    pub min_rho: f64,
    pub min_theta: f64,
}

/// Opaque simulation handle.
pub struct ApflowSimulation {
    mesh: Mesh,
    cfg: StepperConfig,
    eps: f64,
    state: State,
    last_dt: f64,
    last_newton_iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ApflowStatus {
    match e {
        Error::Config(_) => ApflowStatus::InvalidArgument,
        Error::InvalidInitialData(_) => ApflowStatus::InvalidInitialData,
        Error::CflViolation(_) => ApflowStatus::CflViolation,
        Error::NonlinearSolver { .. } => ApflowStatus::NonlinearSolver,
        Error::LinearSolver { .. } => ApflowStatus::LinearSolver,
        Error::Domain(_) => ApflowStatus::Domain,
        Error::Unsupported(_) => ApflowStatus::Unsupported,
        Error::Io(_) | Error::Json(_) => ApflowStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (ApflowStatus, String)>) -> ApflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApflowStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ApflowStatus::Panic
        }
    }
}

fn lift(e: Error) -> (ApflowStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ApflowStatus, String) {
    (ApflowStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> (ApflowStatus, String) {
    (ApflowStatus::InvalidArgument, msg)
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ApflowStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn sim_mut<'a>(p: *mut ApflowSimulation) -> Result<&'a mut ApflowSimulation, (ApflowStatus, String)> {
    p.as_mut().ok_or_else(|| null("simulation"))
}

unsafe fn sim_ref<'a>(p: *const ApflowSimulation) -> Result<&'a ApflowSimulation, (ApflowStatus, String)> {
    p.as_ref().ok_or_else(|| null("simulation"))
}

fn build(cfg: &RunConfig) -> Result<Box<ApflowSimulation>, Error> {
    let run = cfg.resolve()?;
    let state = init_state(&run.mesh, &run.case, run.eps)?;
    Ok(Box::new(ApflowSimulation {
        mesh: run.mesh,
        cfg: run.stepper,
        eps: run.eps,
        state,
        last_dt: 0.0,
        last_newton_iterations: 0,
    }))
}

unsafe fn create(cfg: RunConfig, out: *mut *mut ApflowSimulation) -> Result<(), (ApflowStatus, String)> {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    *out = ptr::null_mut();
    let sim = build(&cfg).map_err(lift)?;
    *out = Box::into_raw(sim);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn apflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a simulation of a named case with its default grid.
/// `eps <= 0` selects the case's default Mach scaling.
///
/// # Safety
/// `case_name` must be NULL or a NUL-terminated string; `out` must be NULL
/// or point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_new(
    case_name: *const c_char,
    eps: f64,
    out: *mut *mut ApflowSimulation,
) -> ApflowStatus {
    guard(|| {
        let name = read_str(case_name, "case name")?;
        let mut cfg = RunConfig::for_case(name);
        if eps > 0.0 {
            cfg.eps = Some(eps);
        } else {
            cfg.eps = Some(CaseSpec::by_name(name).map_err(lift)?.default_eps());
        }
        create(cfg, out)
    })
}

/// Creates a simulation from a TOML configuration in the CLI's format.
///
/// # Safety
/// `toml` must be NULL or a NUL-terminated string; `out` as for
/// [`apflow_simulation_new`].
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_from_toml(
    toml: *const c_char,
    out: *mut *mut ApflowSimulation,
) -> ApflowStatus {
    guard(|| {
        let text = read_str(toml, "configuration")?;
        let cfg = RunConfig::from_toml_str(text).map_err(lift)?;
        create(cfg, out)
    })
}

/// Releases a simulation. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_free(sim: *mut ApflowSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Takes one step of length at most `dt_cap` (use INFINITY for none).
/// On failure the state is unchanged.
///
/// # Safety
/// `sim` must be a live handle; `dt_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_step(
    sim: *mut ApflowSimulation,
    dt_cap: f64,
    dt_out: *mut f64,
) -> ApflowStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        if !(dt_cap > 0.0) {
            return Err(invalid(format!("time-step cap {dt_cap} must be positive")));
        }
        let (next, rep) = step(&s.mesh, &s.state, &s.cfg, dt_cap).map_err(lift)?;
        s.state = next;
        s.last_dt = rep.dt;
        s.last_newton_iterations = rep.newton_iterations;
        if !dt_out.is_null() {
            *dt_out = rep.dt;
        }
        Ok(())
    })
}

/// Steps until the simulation time reaches `t_end`, landing on it exactly.
/// On failure the state holds the last accepted step.
///
/// # Safety
/// `sim` must be a live handle; `steps_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_advance(
    sim: *mut ApflowSimulation,
    t_end: f64,
    steps_out: *mut u64,
) -> ApflowStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        if !t_end.is_finite() {
            return Err(invalid(format!("target time {t_end} is not finite")));
        }
        let tol = 1e-12 * t_end.abs().max(1.0);
        let mut steps = 0u64;
        let result = (|| {
            while s.state.time < t_end - tol {
                let (mut next, rep) = step(&s.mesh, &s.state, &s.cfg, t_end - s.state.time)?;
                if (next.time - t_end).abs() <= tol {
                    next.time = t_end;
                }
                s.state = next;
                s.last_dt = rep.dt;
                s.last_newton_iterations = rep.newton_iterations;
                steps += 1;
            }
            Ok::<(), Error>(())
        })();
        if !steps_out.is_null() {
            *steps_out = steps;
        }
        result.map_err(lift)
    })
}

/// Current simulation time.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_time(sim: *const ApflowSimulation, out: *mut f64) -> ApflowStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let out = out.as_mut().ok_or_else(|| null("output"))?;
        *out = s.state.time;
        Ok(())
    })
}

/// Length and Newton iteration count of the most recent step.
///
/// # Safety
/// `sim` must be a live handle; either output may be NULL.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_last_step(
    sim: *const ApflowSimulation,
    dt_out: *mut f64,
    newton_iterations_out: *mut u32,
) -> ApflowStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        if let Some(o) = dt_out.as_mut() {
            *o = s.last_dt;
        }
        if let Some(o) = newton_iterations_out.as_mut() {
            *o = s.last_newton_iterations as u32;
        }
        Ok(())
    })
}

/// Grid shape: `dim_out` receives 1 or 2, `counts_out` (length 2) the cells
/// per axis, with 1 for an absent axis.
///
/// # Safety
/// `sim` must be a live handle; `dim_out` writable; `counts_out` NULL or
/// writable for two values.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_shape(
    sim: *const ApflowSimulation,
    dim_out: *mut usize,
    counts_out: *mut usize,
) -> ApflowStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let d = dim_out.as_mut().ok_or_else(|| null("dimension output"))?;
        *d = s.mesh.dim();
        if !counts_out.is_null() {
            let counts = std::slice::from_raw_parts_mut(counts_out, 2);
            counts.fill(1);
            counts[..s.mesh.dim()].copy_from_slice(s.mesh.counts());
        }
        Ok(())
    })
}

/// Copies a cell field (row-major, x fastest) into `buffer` of length `len`.
/// `len` must be at least the number of cells.
///
/// # Safety
/// `sim` must be a live handle; `buffer` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_copy_field(
    sim: *const ApflowSimulation,
    field: ApflowField,
    buffer: *mut f64,
    len: usize,
) -> ApflowStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let n = s.mesh.n_cells();
        if len < n {
            return Err((ApflowStatus::BufferTooSmall, format!("buffer holds {len} values, {n} needed")));
        }
        let values = match field {
            ApflowField::Density => s.state.rho.0.clone(),
            ApflowField::PotentialTemperature => s.state.theta.0.clone(),
            ApflowField::TotalPotentialTemperature => s.state.theta_total().0,
            ApflowField::VelocityX => cell_velocity(&s.mesh, &s.state, 0).0,
            ApflowField::VelocityY if s.mesh.dim() > 1 => cell_velocity(&s.mesh, &s.state, 1).0,
            ApflowField::VelocityY => return Err(invalid("a 1D simulation has no y velocity".into())),
        };
        std::slice::from_raw_parts_mut(buffer, n).copy_from_slice(&values);
        Ok(())
    })
}

/// Scalar diagnostics of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apflow_simulation_diagnostics(
    sim: *const ApflowSimulation,
    out: *mut ApflowDiagnostics,
) -> ApflowStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let out = out.as_mut().ok_or_else(|| null("output"))?;
        let r = record(&s.mesh, &s.state, s.eps, s.cfg.gamma, s.last_dt, s.last_newton_iterations);
        *out = ApflowDiagnostics {
            time: r.time,
            step: r.step as u64,
            mass: r.mass,
            theta_total: r.theta_total,
            kinetic_energy: r.kinetic_energy,
            total_energy: r.total_energy.unwrap_or(f64::NAN),
            theta_total_deviation: r.theta_total_deviation,
            max_div_u: r.max_div_u,
            min_rho: r.min_rho,
            min_theta: r.min_theta,
        };
        Ok(())
    })
}
