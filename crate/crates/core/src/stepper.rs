//! One step of the semi-implicit scheme: explicit upwind mass update, implicit
//! solve for the total potential temperature `Theta = rho theta` with the
//! pressure-shifted upwind flux, explicit momentum update.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use crate::diagnostics::total_energy;
use crate::discrete_ops::{dual_density, dual_momentum_fluxes, flux_divergence, grad_faces, DualMassBalanceData};
use crate::error::{Error, Result};
use crate::fields::{compensated_sum, CellField, FaceField, State};
use crate::fluxes::mass_flux;
use crate::linalg::{gmres, PeriodicFft};
use crate::mesh::Mesh;

/// How the stabilisation parameter is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaPolicy {
    /// `eta = max(floor, 3 / (2 min rho_D))` from the current density.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub eps: f64,
    pub gamma: f64,
    /// Fraction in the time-step bound, `0 < beta <= 1/2`.
    pub beta: f64,
    /// Multiplier applied to the admissible time step.
    pub safety: f64,
    pub dt_max: f64,
    pub eta: EtaPolicy,
    pub eta_floor: f64,
    /// Newton stops once `|R|_inf <= newton_rtol * max(1, |Theta^n|_inf max_K J_KK)`.
    pub newton_rtol: f64,
    pub newton_max_iter: usize,
    /// Systems up to this size are solved by dense LU, larger ones by GMRES.
    pub dense_limit: usize,
}

impl StepperConfig {
    pub fn new(mesh: &Mesh, eps: f64, gamma: f64) -> Self {
        Self {
            eps,
            gamma,
            beta: 0.5,
            safety: 1.0,
            dt_max: mesh.min_spacing(),
            eta: EtaPolicy::Auto,
            eta_floor: 0.0,
            newton_rtol: 1e-13,
            newton_max_iter: 50,
            dense_limit: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return bad(format!("beta = {} outside (0, 1/2]", self.beta));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.gamma >= 1.0) {
            return bad(format!("gamma = {} must be at least 1", self.gamma));
        }
        if !(self.dt_max > 0.0) || !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad("dt_max and safety must be positive, safety at most 1".into());
        }
        if let EtaPolicy::Fixed(v) = self.eta {
            if !(v > 0.0) {
                return bad(format!("eta = {v} must be positive"));
            }
        }
        if !(self.newton_rtol > 0.0) || self.newton_max_iter == 0 {
            return bad("Newton tolerance and iteration limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub eta: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub newton_tolerance: f64,
    pub linear_iterations: usize,
    pub rho_positive: bool,
    pub theta_positive: bool,
    /// `None` when `gamma = 1`.
    pub energy_before: Option<f64>,
    pub energy_after: Option<f64>,
    /// `dt` divided by the admissible bound.
    pub cfl_margin: f64,
}

/// Largest admissible time step:
/// `min_sigma (beta/(1+beta)) (min(rho_K,rho_L)/max(rho_K,rho_L)) / (max(|dK|/|K|, |dL|/|L|) |u_sigma|)`.
/// Returns `f64::INFINITY` when the velocity vanishes.
pub fn admissible_dt(mesh: &Mesh, rho: &[f64], u: &FaceField, beta: f64) -> f64 {
    let frac = beta / (1.0 + beta);
    let mut dt = f64::INFINITY;
    for i in 0..mesh.dim() {
        for (f, &v) in u.comp(i).iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (k, l) = mesh.face_cells(i, f);
            let ratio = rho[k].min(rho[l]) / rho[k].max(rho[l]);
            let perim = mesh.perimeter_ratio(k).max(mesh.perimeter_ratio(l));
            dt = dt.min(frac * ratio / (perim * v.abs()));
        }
    }
    dt
}

/// Time step for the next update, capped by `dt_max`.
pub fn compute_dt(mesh: &Mesh, state: &State, cfg: &StepperConfig) -> f64 {
    (cfg.safety * admissible_dt(mesh, &state.rho, &state.u, cfg.beta)).min(cfg.dt_max)
}

/// Explicit upwind mass update; fails if a density becomes non-positive.
pub fn mass_update(mesh: &Mesh, rho: &[f64], u: &FaceField, dt: f64) -> Result<(CellField, FaceField)> {
    let flux = mass_flux(mesh, rho, u);
    let div = flux_divergence(mesh, &flux);
    let rho_new = CellField(rho.iter().zip(div.iter()).map(|(r, d)| r - dt * d).collect());
    if let Some(c) = rho_new.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::CflViolation(format!(
            "density {} in cell {c} after a step of {dt:e}",
            rho_new[c]
        )));
    }
    Ok((rho_new, flux))
}

/// `eta = max(floor, 3 / (2 min_sigma rho_D))`.
pub fn choose_eta(mesh: &Mesh, rho: &[f64], floor: f64) -> f64 {
    let min_dual = dual_density(mesh, rho)
        .components()
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    floor.max(1.5 / min_dual)
}

#[inline]
fn pow_gamma(z: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        z
    } else if gamma == 2.0 {
        z * z
    } else {
        z.powf(gamma)
    }
}

#[inline]
fn dpow_gamma(z: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else if gamma == 2.0 {
        2.0 * z
    } else {
        gamma * z.powf(gamma - 1.0)
    }
}

/// Residual of the implicit temperature equation,
/// `R_K = (Theta_K - Theta^n_K)/dt + (1/|K|) sum_sigma F_{sigma,K}(Theta, v(Theta))`.
pub struct NonlinearResidual<'a> {
    mesh: &'a Mesh,
    theta_old: &'a [f64],
    u: &'a FaceField,
    dt: f64,
    gamma: f64,
    /// `eta dt |sigma| / (eps^2 |D_sigma|)` per axis.
    coef: Vec<f64>,
}

/// Face-local Jacobian entries: face `f` of axis `i` contributes
/// `a_k x_K + a_l x_L` to row `K` and its negative to row `L`.
#[derive(Debug, Clone)]
pub struct FaceJacobian {
    pub inv_dt: f64,
    pub a_k: Vec<Vec<f64>>,
    pub a_l: Vec<Vec<f64>>,
}

impl<'a> NonlinearResidual<'a> {
    pub fn new(
        mesh: &'a Mesh,
        theta_old: &'a [f64],
        u: &'a FaceField,
        dt: f64,
        eta: f64,
        eps: f64,
        gamma: f64,
    ) -> Self {
        let coef = (0..mesh.dim())
            .map(|i| eta * dt * mesh.face_area(i) / (eps * eps * mesh.dual_volume(i)))
            .collect();
        Self { mesh, theta_old, u, dt, gamma, coef }
    }

    pub fn pressure(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|&z| pow_gamma(z, self.gamma)).collect()
    }

    /// Stabilising shift `delta u` on every face for the given `Theta`.
    pub fn shift(&self, theta: &[f64]) -> FaceField {
        let p = self.pressure(theta);
        FaceField::from_fn(self.mesh, |i, f| {
            let (k, l) = self.mesh.face_cells(i, f);
            self.coef[i] * (p[l] - p[k])
        })
    }

    pub fn eval(&self, theta: &[f64], out: &mut [f64]) {
        let mesh = self.mesh;
        let p = self.pressure(theta);
        let inv_vol = 1.0 / mesh.cell_volume();
        for (o, (t, t0)) in out.iter_mut().zip(theta.iter().zip(self.theta_old)) {
            *o = (t - t0) / self.dt;
        }
        for i in 0..mesh.dim() {
            let scale = mesh.face_area(i) * inv_vol;
            let prev = mesh.prev_table(i);
            let u = self.u.comp(i);
            let coef = self.coef[i];
            for f in 0..mesh.n_faces(i) {
                let (k, l) = (prev[f], f);
                let du = coef * (p[l] - p[k]);
                let v = u[f];
                let plus = v.max(0.0) - du.min(0.0);
                let minus = v.min(0.0) - du.max(0.0);
                let g = scale * (theta[k] * plus + theta[l] * minus);
                out[k] += g;
                out[l] -= g;
            }
        }
    }

    /// Generalised Jacobian, choosing the branch active at `theta`.
    pub fn jacobian(&self, theta: &[f64]) -> FaceJacobian {
        let mesh = self.mesh;
        let p = self.pressure(theta);
        let inv_vol = 1.0 / mesh.cell_volume();
        let mut a_k = Vec::with_capacity(mesh.dim());
        let mut a_l = Vec::with_capacity(mesh.dim());
        for i in 0..mesh.dim() {
            let scale = mesh.face_area(i) * inv_vol;
            let prev = mesh.prev_table(i);
            let u = self.u.comp(i);
            let coef = self.coef[i];
            let n = mesh.n_faces(i);
            let (mut ak, mut al) = (vec![0.0; n], vec![0.0; n]);
            for f in 0..n {
                let (k, l) = (prev[f], f);
                let du = coef * (p[l] - p[k]);
                let v = u[f];
                let plus = v.max(0.0) - du.min(0.0);
                let minus = v.min(0.0) - du.max(0.0);
                // the shift is carried by the upwind value of its own sign
                let carrier = if du < 0.0 { theta[k] } else { theta[l] };
                let dk = coef * dpow_gamma(theta[k], self.gamma);
                let dl = coef * dpow_gamma(theta[l], self.gamma);
                ak[f] = scale * (plus + carrier * dk);
                al[f] = scale * (minus - carrier * dl);
            }
            a_k.push(ak);
            a_l.push(al);
        }
        FaceJacobian { inv_dt: 1.0 / self.dt, a_k, a_l }
    }
}

impl FaceJacobian {
    pub fn apply(&self, mesh: &Mesh, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.inv_dt * xi;
        }
        for i in 0..self.a_k.len() {
            let prev = mesh.prev_table(i);
            let (ak, al) = (&self.a_k[i], &self.a_l[i]);
            for f in 0..ak.len() {
                let k = prev[f];
                let g = ak[f] * x[k] + al[f] * x[f];
                out[k] += g;
                out[f] -= g;
            }
        }
    }

    pub fn diagonal(&self, mesh: &Mesh) -> Vec<f64> {
        let mut d = vec![self.inv_dt; mesh.n_cells()];
        for i in 0..self.a_k.len() {
            let prev = mesh.prev_table(i);
            for f in 0..self.a_k[i].len() {
                d[prev[f]] += self.a_k[i][f];
                d[f] -= self.a_l[i][f];
            }
        }
        d
    }

    pub fn dense(&self, mesh: &Mesh) -> DMatrix<f64> {
        let n = mesh.n_cells();
        let mut m = DMatrix::identity(n, n) * self.inv_dt;
        for i in 0..self.a_k.len() {
            let prev = mesh.prev_table(i);
            for f in 0..n {
                let k = prev[f];
                m[(k, k)] += self.a_k[i][f];
                m[(k, f)] += self.a_l[i][f];
                m[(f, k)] -= self.a_k[i][f];
                m[(f, f)] -= self.a_l[i][f];
            }
        }
        m
    }

    /// Fourier symbol of the operator with every coefficient replaced by its axis mean.
    pub fn mean_symbol(&self, fft: &PeriodicFft) -> Vec<Complex64> {
        let means: Vec<(f64, f64)> = self
            .a_k
            .iter()
            .zip(&self.a_l)
            .map(|(ak, al)| {
                let n = ak.len() as f64;
                (ak.iter().sum::<f64>() / n, al.iter().sum::<f64>() / n)
            })
            .collect();
        (0..fft.len())
            .map(|k| {
                let (tx, ty) = fft.angles(k);
                let mut s = Complex64::new(self.inv_dt, 0.0);
                for (axis, &(a, b)) in means.iter().enumerate() {
                    let t = if axis == 0 { tx } else { ty };
                    let e = Complex64::new(t.cos(), t.sin());
                    s += a * (1.0 - e.conj()) + b * (e - 1.0);
                }
                s
            })
            .collect()
    }
}

/// Result of the implicit temperature solve.
#[derive(Debug, Clone)]
pub struct ThetaSolve {
    pub theta_total: CellField,
    pub pressure: CellField,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub linear_iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Restores `sum Theta = target` exactly up to rounding by a uniform shift.
fn project_total(theta: &mut [f64], target: f64) {
    let shift = (target - compensated_sum(theta.iter().copied())) / theta.len() as f64;
    theta.iter_mut().for_each(|v| *v += shift);
}

struct LinearSolver {
    fft: Option<PeriodicFft>,
    dense: bool,
}

impl LinearSolver {
    fn new(mesh: &Mesh, dense_limit: usize) -> Self {
        let dense = mesh.n_cells() <= dense_limit;
        Self { fft: (!dense).then(|| PeriodicFft::new(mesh.counts())), dense }
    }

    /// Solves `J d = rhs` to relative accuracy `rtol`; returns inner iterations.
    fn solve(&mut self, mesh: &Mesh, jac: &FaceJacobian, rhs: &[f64], d: &mut [f64], rtol: f64) -> Result<usize> {
        if self.dense {
            let lu = jac.dense(mesh).lu();
            let x = lu
                .solve(&DVector::from_column_slice(rhs))
                .ok_or(Error::LinearSolver { iterations: 0, residual: f64::INFINITY })?;
            d.copy_from_slice(x.as_slice());
            return Ok(1);
        }
        let fft = self.fft.as_mut().expect("FFT plan for iterative solves");
        let symbol = jac.mean_symbol(fft);
        d.iter_mut().for_each(|v| *v = 0.0);
        let info = gmres(
            |x, out| jac.apply(mesh, x, out),
            |r, out| fft.solve(&symbol, r, out),
            rhs,
            d,
            rtol,
            40,
            400,
        )?;
        Ok(info.iterations)
    }
}

/// Newton solve of the implicit temperature equation.
#[allow(clippy::too_many_arguments)]
pub fn solve_theta_implicit(
    mesh: &Mesh,
    theta_old: &[f64],
    u: &FaceField,
    dt: f64,
    eta: f64,
    cfg: &StepperConfig,
) -> Result<ThetaSolve> {
    let n = mesh.n_cells();
    let res = NonlinearResidual::new(mesh, theta_old, u, dt, eta, cfg.eps, cfg.gamma);
    let target = compensated_sum(theta_old.iter().copied());
    let mut solver = LinearSolver::new(mesh, cfg.dense_limit);

    let mut theta = theta_old.to_vec();
    let mut r = vec![0.0; n];
    res.eval(&theta, &mut r);
    let mut rn = inf_norm(&r);
    let jac0 = res.jacobian(&theta);
    let max_diag = inf_norm(&jac0.diagonal(mesh));
    let tol = cfg.newton_rtol * (inf_norm(theta_old) * max_diag).max(1.0);

    let mut iterations = 0;
    let mut linear_iterations = 0;
    let mut jac = Some(jac0);
    let mut d = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut rc = vec![0.0; n];
    let mut polished = false;

    while rn > tol || !polished {
        if rn <= tol {
            polished = true;
        }
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NonlinearSolver { iterations, residual: rn, tolerance: tol });
        }
        let j = jac.take().unwrap_or_else(|| res.jacobian(&theta));
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let r2 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lin_rtol = (0.1 * tol / r2).clamp(1e-12, 1e-4);
        linear_iterations += solver.solve(mesh, &j, &rhs, &mut d, lin_rtol)?;
        iterations += 1;

        // damped update: positivity first, then decrease of the residual
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for ((c, t), di) in cand.iter_mut().zip(&theta).zip(&d) {
                *c = t + lambda * di;
            }
            project_total(&mut cand, target);
            if cand.iter().all(|&v| v > 0.0) {
                res.eval(&cand, &mut rc);
                let rcn = inf_norm(&rc);
                if rcn < rn || (!polished && rcn <= tol) {
                    accepted = true;
                    break;
                }
            }
            if polished {
                break;
            }
            lambda *= 0.5;
        }
        if accepted {
            std::mem::swap(&mut theta, &mut cand);
            std::mem::swap(&mut r, &mut rc);
            rn = inf_norm(&r);
        } else if polished {
            // the polishing step did not help: keep the converged iterate
            break;
        } else {
            return Err(Error::NonlinearSolver { iterations, residual: rn, tolerance: tol });
        }
    }

    let pressure = CellField(res.pressure(&theta));
    Ok(ThetaSolve {
        theta_total: CellField(theta),
        pressure,
        iterations,
        residual: rn,
        tolerance: tol,
        linear_iterations,
    })
}

/// `u^{n+1} = [rho_D^n u^n - dt (convection) - (dt/eps^2) grad p] / rho_D^{n+1}`.
pub fn momentum_update(
    mesh: &Mesh,
    u: &FaceField,
    dual: &DualMassBalanceData,
    rho_new: &[f64],
    p_new: &[f64],
    dt: f64,
    eps: f64,
) -> FaceField {
    let conv = dual.convection(mesh, u);
    let grad = grad_faces(mesh, p_new);
    let rho_dual_new = dual_density(mesh, rho_new);
    let inv_eps2 = 1.0 / (eps * eps);
    FaceField::from_fn(mesh, |i, f| {
        let momentum = dual.rho_dual.comp(i)[f] * u.comp(i)[f]
            - dt * conv.comp(i)[f]
            - dt * inv_eps2 * grad.comp(i)[f];
        momentum / rho_dual_new.comp(i)[f]
    })
}

/// Advances `state` by one step of length at most `dt_cap`.
pub fn step(mesh: &Mesh, state: &State, cfg: &StepperConfig, dt_cap: f64) -> Result<(State, StepReport)> {
    let bound = cfg.safety * admissible_dt(mesh, &state.rho, &state.u, cfg.beta);
    let dt = bound.min(cfg.dt_max).min(dt_cap);
    if !(dt > 0.0) {
        return Err(Error::CflViolation(format!("non-positive time step {dt:e}")));
    }
    let mut out = step_with_dt(mesh, state, cfg, dt)?;
    out.1.cfl_margin = if bound.is_finite() { dt / bound } else { 0.0 };
    Ok(out)
}

/// Advances `state` by exactly `dt`, without checking the time-step bound.
pub fn step_with_dt(mesh: &Mesh, state: &State, cfg: &StepperConfig, dt: f64) -> Result<(State, StepReport)> {
    let (rho_new, flux) = mass_update(mesh, &state.rho, &state.u, dt)?;
    let eta = match cfg.eta {
        EtaPolicy::Auto => choose_eta(mesh, &state.rho, cfg.eta_floor),
        EtaPolicy::Fixed(v) => v,
    };
    let theta_old = state.theta_total();
    let solve = solve_theta_implicit(mesh, &theta_old, &state.u, dt, eta, cfg)?;
    let dual = dual_momentum_fluxes(mesh, &state.rho, &flux);
    let u_new = momentum_update(mesh, &state.u, &dual, &rho_new, &solve.pressure, dt, cfg.eps);
    let theta_new = CellField(
        solve
            .theta_total
            .iter()
            .zip(rho_new.iter())
            .map(|(t, r)| t / r)
            .collect(),
    );
    if !u_new.is_finite() {
        return Err(Error::Domain("non-finite velocity after the momentum update".into()));
    }

    let next = State {
        rho: rho_new,
        theta: theta_new,
        u: u_new,
        time: state.time + dt,
        step_index: state.step_index + 1,
    };
    let report = StepReport {
        dt,
        eta,
        newton_iterations: solve.iterations,
        newton_residual: solve.residual,
        newton_tolerance: solve.tolerance,
        linear_iterations: solve.linear_iterations,
        rho_positive: next.rho.iter().all(|&v| v > 0.0),
        theta_positive: next.theta.iter().all(|&v| v > 0.0),
        energy_before: total_energy(mesh, state, cfg.eps, cfg.gamma).ok().map(|e| e.total),
        energy_after: total_energy(mesh, &next, cfg.eps, cfg.gamma).ok().map(|e| e.total),
        cfl_margin: f64::NAN,
    };
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{self, CaseSpec};
    use crate::fields::init_state;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_state(mesh: &Mesh, seed: &mut u64, amp: f64) -> State {
        let n = mesh.n_cells();
        State {
            rho: CellField((0..n).map(|_| 0.8 + 0.4 * lcg(seed)).collect()),
            theta: CellField((0..n).map(|_| 0.9 + 0.2 * lcg(seed)).collect()),
            u: FaceField::from_fn(mesh, |_, _| amp * (2.0 * lcg(seed) - 1.0)),
            time: 0.0,
            step_index: 0,
        }
    }

    #[test]
    fn dt_examples() {
        let m = Mesh::uniform(&[(0.0, 1.0)], &[4]).unwrap();
        let u = FaceField::from_components(vec![vec![1.0; 4]]);
        assert!((admissible_dt(&m, &[1.0; 4], &u, 0.5) - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(admissible_dt(&m, &[1.0; 4], &FaceField::zeros(&m), 0.5), f64::INFINITY);
        let mixed = admissible_dt(&m, &[1.0, 4.0, 1.0, 4.0], &u, 0.5);
        assert!((mixed - 1.0 / 96.0).abs() < 1e-15);

        let s = init_state(&m, &CaseSpec::constant(1, 1.0, 1.0, [0.0; 3]), 1.0).unwrap();
        let cfg = StepperConfig::new(&m, 1.0, 1.4);
        assert_eq!(compute_dt(&m, &s, &cfg), 0.25);
    }

    #[test]
    fn mass_update_four_cell_oracle() {
        let m = Mesh::uniform(&[(0.0, 1.0)], &[4]).unwrap();
        let u = FaceField::from_components(vec![vec![1.0; 4]]);
        let (rho, _) = mass_update(&m, &[1.0, 2.0, 1.0, 2.0], &u, 0.05).unwrap();
        // brute force: rho_K - (dt/h)(rho_K - rho_{K-1})
        let old = [1.0, 2.0, 1.0, 2.0];
        for c in 0..4 {
            let expect = old[c] - 0.2 * (old[c] - old[(c + 3) % 4]);
            assert!((rho[c] - expect).abs() < 1e-15);
        }
        for (got, want) in rho.iter().zip([1.2, 1.8, 1.2, 1.8]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn mass_update_conserves_and_rejects_overshoot() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[5, 4]).unwrap();
        let mut seed = 12;
        let s = random_state(&m, &mut seed, 1.0);
        let dt = admissible_dt(&m, &s.rho, &s.u, 0.5);
        let (rho, _) = mass_update(&m, &s.rho, &s.u, dt).unwrap();
        let (a, b) = (s.rho.integral(&m), rho.integral(&m));
        assert!((a - b).abs() <= 1e-13 * a);
        assert!(rho.iter().all(|&v| v > 0.0));
        assert!(matches!(mass_update(&m, &s.rho, &s.u, 10.0), Err(Error::CflViolation(_))));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn eta_examples() {
        let m = Mesh::uniform(&[(-1.0, 1.0)], &[200]).unwrap();
        assert_eq!(choose_eta(&m, &vec![1.0; 200], 0.0), 1.5);
        assert_eq!(choose_eta(&m, &vec![0.5; 200], 0.0), 3.0);
        assert_eq!(choose_eta(&m, &vec![1.0; 200], 2.0), 2.0);
        let s = init_state(&m, &cases::colliding_pulses(), 0.1).unwrap();
        let eta = choose_eta(&m, &s.rho, 0.0);
        // the smallest dual density is at the two cells around x = 0
        let expect = 1.5 / (0.955 + 0.05 * (1.0 - (2.0 * std::f64::consts::PI * 0.005).cos()));
        assert!((eta - expect).abs() < 1e-12);
        assert!((eta - 1.5707).abs() < 1e-4);
    }

    /// Residual assembled directly from the flux formulas, face by face.
    fn oracle_residual(m: &Mesh, theta_old: &[f64], u: &FaceField, dt: f64, eta: f64, eps: f64, gamma: f64, theta: &[f64]) -> Vec<f64> {
        let n = m.n_cells();
        let p: Vec<f64> = theta.iter().map(|z| z.powf(gamma)).collect();
        let mut r: Vec<f64> = (0..n).map(|c| (theta[c] - theta_old[c]) / dt).collect();
        for c in 0..n {
            for (i, f, sign) in m.cell_faces(c) {
                let (k, l) = m.face_cells(i, f);
                let du = eta * dt / (eps * eps) * m.face_area(i) * (p[l] - p[k]) / m.dual_volume(i);
                let v = u.comp(i)[f];
                let vp = v.max(0.0) - du.min(0.0);
                let vm = v.min(0.0) - du.max(0.0);
                let flux_k = m.face_area(i) * (theta[k] * vp + theta[l] * vm);
                r[c] += sign * flux_k / m.cell_volume();
            }
        }
        r
    }

    #[test]
    fn residual_matches_oracle_and_is_conservative() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 3]).unwrap();
        let mut seed = 21;
        let s = random_state(&m, &mut seed, 0.5);
        let theta_old = s.theta_total();
        let theta: Vec<f64> = theta_old.iter().map(|v| v * (1.0 + 0.01 * lcg(&mut seed))).collect();
        let res = NonlinearResidual::new(&m, &theta_old, &s.u, 0.01, 1.7, 0.3, 1.4);
        let mut r = vec![0.0; 12];
        res.eval(&theta, &mut r);
        let o = oracle_residual(&m, &theta_old, &s.u, 0.01, 1.7, 0.3, 1.4, &theta);
        for (a, b) in r.iter().zip(&o) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let total: f64 = r.iter().zip(theta.iter().zip(theta_old.iter())).map(|(r, (t, t0))| r - (t - t0) / 0.01).sum();
        assert!(total.abs() < 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[3, 4]).unwrap();
        let mut seed = 33;
        let s = random_state(&m, &mut seed, 0.5);
        let theta_old = s.theta_total();
        let theta: Vec<f64> = theta_old.iter().map(|v| v * (1.0 + 0.05 * lcg(&mut seed))).collect();
        let res = NonlinearResidual::new(&m, &theta_old, &s.u, 0.02, 1.5, 0.5, 1.4);
        let jac = res.jacobian(&theta).dense(&m);
        let n = m.n_cells();
        let (mut rp, mut rm) = (vec![0.0; n], vec![0.0; n]);
        for col in 0..n {
            let h = 1e-6;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[col] += h;
            tm[col] -= h;
            res.eval(&tp, &mut rp);
            res.eval(&tm, &mut rm);
            for row in 0..n {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                assert!(
                    (fd - jac[(row, col)]).abs() <= 1e-5 * jac[(row, col)].abs().max(1.0),
                    "({row},{col}): fd {fd} vs {}",
                    jac[(row, col)]
                );
            }
        }
        // |K|-weighted column sums equal |K|/dt
        for col in 0..n {
            let s: f64 = (0..n).map(|row| jac[(row, col)]).sum();
            assert!((s - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobian_has_m_matrix_sign_pattern() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let mut seed = 44;
        for _ in 0..20 {
            let s = random_state(&m, &mut seed, 1.0);
            let theta_old = s.theta_total();
            let dt = 0.01;
            let res = NonlinearResidual::new(&m, &theta_old, &s.u, dt, 1.5, 0.1, 1.4);
            let j = res.jacobian(&theta_old).dense(&m);
            for r in 0..16 {
                assert!(j[(r, r)] >= 1.0 / dt - 1e-9);
                for c in 0..16 {
                    if r != c {
                        assert!(j[(r, c)] <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_state_is_a_fixed_point() {
        for dims in [vec![8], vec![6, 5]] {
            let ext = vec![(0.0, 1.0); dims.len()];
            let m = Mesh::uniform(&ext, &dims).unwrap();
            let case = CaseSpec::constant(dims.len(), 1.3, 0.8, [0.4, -0.3, 0.0]);
            let s = init_state(&m, &case, 0.1).unwrap();
            let cfg = StepperConfig::new(&m, 0.1, 1.4);
            let (next, rep) = step(&m, &s, &cfg, f64::INFINITY).unwrap();
            for c in 0..m.n_cells() {
                assert!((next.rho[c] - 1.3).abs() < 1e-14);
                assert!((next.theta[c] - 0.8).abs() < 1e-14);
            }
            for i in 0..m.dim() {
                let want = [0.4, -0.3][i];
                assert!(next.u.comp(i).iter().all(|&v| (v - want).abs() < 1e-14));
            }
            assert!(rep.dt > 0.0);
        }
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let s = init_state(&m, &CaseSpec::constant(2, 1.0, 1.0, [0.0; 3]), 0.1).unwrap();
        let cfg = StepperConfig::new(&m, 0.1, 1.4);
        let (next, rep) = step(&m, &s, &cfg, f64::INFINITY).unwrap();
        assert_eq!(rep.dt, cfg.dt_max);
        assert_eq!(next.rho, s.rho);
        assert_eq!(next.u, s.u);
    }

    #[test]
    fn single_cell_grid_keeps_theta() {
        let m = Mesh::uniform(&[(0.0, 1.0)], &[1]).unwrap();
        let u = FaceField::from_components(vec![vec![0.7]]);
        let cfg = StepperConfig::new(&m, 1.0, 1.4);
        let sol = solve_theta_implicit(&m, &[1.25], &u, 0.1, 1.5, &cfg).unwrap();
        assert!((sol.theta_total[0] - 1.25).abs() < 1e-15);
    }

    /// Dense implicit-upwind oracle: with a negligible shift the solve reduces to
    /// `(I/dt + A(u)) Theta = Theta^n / dt`, assembled cell by cell.
    #[test]
    fn weak_stabilisation_reduces_to_implicit_upwind() {
        let n = 16;
        let m = Mesh::uniform(&[(0.0, 1.0)], &[n]).unwrap();
        let mut seed = 55;
        let s = random_state(&m, &mut seed, 1.0);
        let theta_old = s.theta_total();
        let dt = 0.01;

        let h = 1.0 / n as f64;
        let mut a = DMatrix::identity(n, n) / dt;
        for f in 0..n {
            let (k, l) = ((f + n - 1) % n, f);
            let v = s.u.comp(0)[f];
            a[(k, k)] += v.max(0.0) / h;
            a[(k, l)] += v.min(0.0) / h;
            a[(l, k)] -= v.max(0.0) / h;
            a[(l, l)] -= v.min(0.0) / h;
        }
        let rhs = DVector::from_iterator(n, theta_old.iter().map(|t| t / dt));
        let oracle = a.lu().solve(&rhs).unwrap();

        let gap = |eps: f64| {
            let mut cfg = StepperConfig::new(&m, eps, 1.4);
            cfg.newton_rtol = 1e-15;
            let sol = solve_theta_implicit(&m, &theta_old, &s.u, dt, 1.5, &cfg).unwrap();
            (0..n).map(|c| (sol.theta_total[c] - oracle[c]).abs()).fold(0.0, f64::max)
        };
        // the shift is O(eps^-2): the gap shrinks a hundredfold per decade
        let (g3, g4) = (gap(1e3), gap(1e4));
        assert!(g3 < 1e-6, "eps 1e3: {g3}");
        assert!(g4 < 1e-8, "eps 1e4: {g4}");
        assert!((g3 / g4 - 100.0).abs() < 1.0, "ratio {}", g3 / g4);
    }

    /// Full nonlinear oracle on a 16-cell grid: an independent Newton iteration on
    /// the brute-force residual with a finite-difference Jacobian.
    #[test]
    fn implicit_solve_matches_dense_oracle() {
        for dims in [vec![16], vec![4, 4]] {
            let ext = vec![(0.0, 1.0); dims.len()];
            let m = Mesh::uniform(&ext, &dims).unwrap();
            let mut seed = 66;
            let s = random_state(&m, &mut seed, 0.5);
            let theta_old = s.theta_total();
            let (dt, eta, eps, gamma) = (0.01, 1.5, 0.2, 1.4);
            let mut cfg = StepperConfig::new(&m, eps, gamma);
            cfg.newton_rtol = 1e-15;
            let sol = solve_theta_implicit(&m, &theta_old, &s.u, dt, eta, &cfg).unwrap();

            let n = m.n_cells();
            let mut x = theta_old.0.clone();
            for _ in 0..40 {
                let r = oracle_residual(&m, &theta_old, &s.u, dt, eta, eps, gamma, &x);
                let mut jac = DMatrix::zeros(n, n);
                for col in 0..n {
                    let hh = 1e-7 * x[col];
                    let mut xp = x.clone();
                    xp[col] += hh;
                    let rp = oracle_residual(&m, &theta_old, &s.u, dt, eta, eps, gamma, &xp);
                    for row in 0..n {
                        jac[(row, col)] = (rp[row] - r[row]) / hh;
                    }
                }
                let d = jac.lu().solve(&-DVector::from_vec(r)).unwrap();
                for c in 0..n {
                    x[c] += d[c];
                }
            }
            for c in 0..n {
                assert!(
                    (sol.theta_total[c] - x[c]).abs() < 1e-12,
                    "cell {c}: {} vs {}",
                    sol.theta_total[c],
                    x[c]
                );
            }
            let a = compensated_sum(theta_old.iter().copied());
            let b = compensated_sum(sol.theta_total.iter().copied());
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn iterative_and_dense_paths_agree() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[12, 10]).unwrap();
        let mut seed = 77;
        let s = random_state(&m, &mut seed, 0.5);
        let theta_old = s.theta_total();
        for eps in [1.0, 1e-2, 1e-4] {
            let mut cfg = StepperConfig::new(&m, eps, 2.0);
            let dense = solve_theta_implicit(&m, &theta_old, &s.u, 0.005, 1.9, &cfg).unwrap();
            cfg.dense_limit = 0;
            let iter = solve_theta_implicit(&m, &theta_old, &s.u, 0.005, 1.9, &cfg).unwrap();
            for c in 0..m.n_cells() {
                assert!((dense.theta_total[c] - iter.theta_total[c]).abs() < 1e-11, "eps {eps}");
            }
            assert!(iter.iterations <= 8);
        }
    }

    #[test]
    fn momentum_update_examples() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let n = 16;
        // pure acoustic kick
        let rho = vec![1.0; n];
        let p: Vec<f64> = (0..n).map(|c| 1.0 + 0.1 * (c as f64).sin()).collect();
        let u0 = FaceField::zeros(&m);
        let (rho_new, flux) = mass_update(&m, &rho, &u0, 0.01).unwrap();
        let dual = dual_momentum_fluxes(&m, &rho, &flux);
        let u1 = momentum_update(&m, &u0, &dual, &rho_new, &p, 0.01, 0.5);
        let g = grad_faces(&m, &p);
        for i in 0..2 {
            for f in 0..n {
                let want = -0.01 / 0.25 * g.comp(i)[f];
                assert!((u1.comp(i)[f] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn momentum_is_conserved_without_pressure_gradient() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[5, 6]).unwrap();
        let mut seed = 88;
        for _ in 0..10 {
            let s = random_state(&m, &mut seed, 1.0);
            let dt = admissible_dt(&m, &s.rho, &s.u, 0.5);
            let (rho_new, flux) = mass_update(&m, &s.rho, &s.u, dt).unwrap();
            let dual = dual_momentum_fluxes(&m, &s.rho, &flux);
            let u1 = momentum_update(&m, &s.u, &dual, &rho_new, &[1.0; 30], dt, 0.1);
            let rd = dual_density(&m, &rho_new);
            for i in 0..2 {
                let before: f64 = (0..30).map(|f| dual.rho_dual.comp(i)[f] * s.u.comp(i)[f]).sum();
                let after: f64 = (0..30).map(|f| rd.comp(i)[f] * u1.comp(i)[f]).sum();
                assert!((before - after).abs() <= 1e-13 * (1.0 + before.abs()));
            }
        }
    }
}
