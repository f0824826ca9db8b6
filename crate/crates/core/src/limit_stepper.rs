//! Semi-implicit scheme for the incompressible, density-dependent limit
//! `eps -> 0`: explicit upwind mass update, a stabilised divergence constraint
//! `div(U^n - eta dt grad pi^{n+1}) = 0` for the second-order pressure, and an
//! explicit momentum update driven by `grad pi^{n+1}`.
//!
//! The limit enforces `rho theta = 1`, so the potential temperature is carried
//! as `1 / rho`.

use rustfft::num_complex::Complex64;

use crate::cases::CaseSpec;
use crate::discrete_ops::{div_cells, dual_density, dual_momentum_fluxes, grad_faces, DualMassBalanceData};
use crate::error::{Error, Result};
use crate::fields::{CellField, FaceField, State};
use crate::linalg::{pcg_zero_mean, PeriodicFft};
use crate::mesh::Mesh;
use crate::stepper::{admissible_dt, choose_eta, mass_update, EtaPolicy, StepperConfig};

/// Relative tolerance of the pressure solve.
pub const PRESSURE_RTOL: f64 = 1e-12;
const PRESSURE_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub rho: CellField,
    pub u: FaceField,
    /// Second-order pressure, zero mean.
    pub pi: CellField,
    pub time: f64,
    pub step_index: usize,
}

impl LimitState {
    /// Limit data for `case`: `rho_0 = 1 / theta_0`, velocity sampled at faces.
    pub fn from_case(mesh: &Mesh, case: &CaseSpec, eps: f64) -> Result<Self> {
        let rho = CellField::from_fn(mesh, |c| 1.0 / case.theta0(&mesh.cell_center(c), eps));
        if let Some(c) = rho.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInitialData(format!(
                "{}: limit density {} at cell {c}",
                case.name, rho[c]
            )));
        }
        let u = FaceField::from_fn(mesh, |i, f| case.velocity0(i, &mesh.face_center(i, f), eps));
        Ok(Self { rho, u, pi: CellField::zeros(mesh), time: 0.0, step_index: 0 })
    }

    /// `theta = 1 / rho`.
    pub fn theta(&self) -> CellField {
        CellField(self.rho.iter().map(|r| 1.0 / r).collect())
    }

    /// View as a compressible state with `rho theta = 1`.
    pub fn to_state(&self) -> State {
        State {
            rho: self.rho.clone(),
            theta: self.theta(),
            u: self.u.clone(),
            time: self.time,
            step_index: self.step_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitStepReport {
    pub dt: f64,
    pub eta: f64,
    pub pressure_iterations: usize,
    pub pressure_residual: f64,
    pub kinetic_before: f64,
    pub kinetic_after: f64,
    /// `max_K |div(U^n - eta dt grad pi)|` after the solve.
    pub constraint_residual: f64,
}

/// Upwind mass update driven by the limit velocity.
pub fn limit_mass_update(mesh: &Mesh, ls: &LimitState, dt: f64) -> Result<(CellField, FaceField)> {
    mass_update(mesh, &ls.rho, &ls.u, dt)
}

/// Solves `eta dt div grad pi = div U^n` with zero mean by FFT-preconditioned CG.
pub fn solve_pressure(mesh: &Mesh, un: &FaceField, eta: f64, dt: f64, rtol: f64) -> Result<(CellField, usize, f64)> {
    if mesh.dim() > 2 {
        return Err(Error::Config("the pressure solver supports one and two dimensions".into()));
    }
    let scale = eta * dt;
    // A = -eta dt div grad is positive semi-definite with the constants as null space.
    let rhs: Vec<f64> = div_cells(mesh, un).iter().map(|d| -d).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        let lap = div_cells(mesh, &grad_faces(mesh, x));
        for (o, l) in out.iter_mut().zip(lap.iter()) {
            *o = -scale * l;
        }
    };
    let mut fft = PeriodicFft::new(mesh.counts());
    let h: Vec<f64> = (0..mesh.dim()).map(|i| mesh.spacing(i)).collect();
    let symbol: Vec<Complex64> = (0..fft.len())
        .map(|k| {
            let (tx, ty) = fft.angles(k);
            let s: f64 = h
                .iter()
                .zip([tx, ty])
                .map(|(h, t)| (2.0 - 2.0 * t.cos()) / (h * h))
                .sum();
            Complex64::new(scale * s, 0.0)
        })
        .collect();
    let precond = |r: &[f64], z: &mut [f64]| fft.solve(&symbol, r, z);
    let mut pi = vec![0.0; mesh.n_cells()];
    let info = pcg_zero_mean(apply, precond, &rhs, &mut pi, rtol, PRESSURE_MAX_ITER)?;
    Ok((CellField(pi), info.iterations, info.relative_residual))
}

/// `U^{n+1} = [rho_D^n U^n - dt (convection) - dt grad pi] / rho_D^{n+1}`.
pub fn limit_momentum_update(
    mesh: &Mesh,
    u: &FaceField,
    dual: &DualMassBalanceData,
    rho_new: &[f64],
    pi_new: &[f64],
    dt: f64,
) -> FaceField {
    let conv = dual.convection(mesh, u);
    let grad = grad_faces(mesh, pi_new);
    let rho_dual_new = dual_density(mesh, rho_new);
    FaceField::from_fn(mesh, |i, f| {
        let momentum = dual.rho_dual.comp(i)[f] * u.comp(i)[f] - dt * conv.comp(i)[f] - dt * grad.comp(i)[f];
        momentum / rho_dual_new.comp(i)[f]
    })
}

/// `sum_sigma |D_sigma| rho_D U^2 / 2`.
pub fn limit_kinetic_energy(mesh: &Mesh, rho: &[f64], u: &FaceField) -> f64 {
    let rd = dual_density(mesh, rho);
    (0..mesh.dim())
        .map(|i| {
            let vol = mesh.dual_volume(i);
            rd.comp(i)
                .iter()
                .zip(u.comp(i))
                .map(|(r, v)| 0.5 * vol * r * v * v)
                .sum::<f64>()
        })
        .sum()
}

/// One limit step. Uses `beta`, `safety`, `dt_max` and the eta policy of `cfg`;
/// `eps` and `gamma` play no role.
pub fn limit_step(
    mesh: &Mesh,
    ls: &LimitState,
    cfg: &StepperConfig,
    dt_cap: f64,
) -> Result<(LimitState, LimitStepReport)> {
    let dt = (cfg.safety * admissible_dt(mesh, &ls.rho, &ls.u, cfg.beta))
        .min(cfg.dt_max)
        .min(dt_cap);
    if !(dt > 0.0) {
        return Err(Error::CflViolation(format!("non-positive time step {dt:e}")));
    }
    limit_step_with_dt(mesh, ls, cfg, dt)
}

pub fn limit_step_with_dt(
    mesh: &Mesh,
    ls: &LimitState,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<(LimitState, LimitStepReport)> {
    let (rho_new, flux) = limit_mass_update(mesh, ls, dt)?;
    let eta = match cfg.eta {
        EtaPolicy::Auto => choose_eta(mesh, &ls.rho, cfg.eta_floor),
        EtaPolicy::Fixed(v) => v,
    };
    let (pi, iterations, residual) = solve_pressure(mesh, &ls.u, eta, dt, PRESSURE_RTOL)?;
    let dual = dual_momentum_fluxes(mesh, &ls.rho, &flux);
    let u_new = limit_momentum_update(mesh, &ls.u, &dual, &rho_new, &pi, dt);
    if !u_new.is_finite() {
        return Err(Error::Domain("non-finite velocity after the limit momentum update".into()));
    }

    let grad = grad_faces(mesh, &pi);
    let shifted = FaceField::from_fn(mesh, |i, f| ls.u.comp(i)[f] - eta * dt * grad.comp(i)[f]);
    let report = LimitStepReport {
        dt,
        eta,
        pressure_iterations: iterations,
        pressure_residual: residual,
        kinetic_before: limit_kinetic_energy(mesh, &ls.rho, &ls.u),
        kinetic_after: limit_kinetic_energy(mesh, &rho_new, &u_new),
        constraint_residual: div_cells(mesh, &shifted).max_abs(),
    };
    let next = LimitState {
        rho: rho_new,
        u: u_new,
        pi,
        time: ls.time + dt,
        step_index: ls.step_index + 1,
    };
    Ok((next, report))
}
