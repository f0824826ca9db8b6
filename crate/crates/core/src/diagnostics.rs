//! Scalar and field diagnostics: energies, norms, Mach number, conservation totals.

use serde::{Deserialize, Serialize};

use crate::discrete_ops::{div_cells, dual_density};
use crate::error::{Error, Result};
use crate::fields::{compensated_sum, CellField, State};
use crate::mesh::Mesh;

fn require_gamma(gamma: f64) -> Result<()> {
    if gamma > 1.0 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "internal energy requires gamma > 1 (got {gamma})"
        )))
    }
}

/// `psi(z) = z^gamma / (gamma - 1)`.
pub fn helmholtz(z: f64, gamma: f64) -> Result<f64> {
    require_gamma(gamma)?;
    Ok(z.powf(gamma) / (gamma - 1.0))
}

/// `Pi(z) = psi(z) - psi(1) - psi'(1)(z - 1)`.
///
/// Near `z = 1` the binomial series is summed instead, since the direct
/// formula cancels to rounding noise exactly where the low Mach regime lives.
pub fn relative_internal_energy(z: f64, gamma: f64) -> Result<f64> {
    require_gamma(gamma)?;
    let w = z - 1.0;
    if w.abs() > 0.25 {
        return Ok((z.powf(gamma) - 1.0 - gamma * w) / (gamma - 1.0));
    }
    // sum_{k>=2} binom(gamma, k) w^k, with binom(gamma,2)/(gamma-1) = gamma/2
    let mut coeff = 0.5 * gamma;
    let mut power = w * w;
    let mut sum = coeff * power;
    for k in 3..80 {
        coeff *= (gamma - (k - 1) as f64) / k as f64;
        power *= w;
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub kinetic: f64,
    /// `(1/eps^2) sum |K| Pi(rho theta)`.
    pub internal: f64,
    pub total: f64,
}

/// `sum_sigma |D_sigma| rho_D u^2 / 2`.
pub fn kinetic_energy(mesh: &Mesh, state: &State) -> f64 {
    let rd = dual_density(mesh, &state.rho);
    compensated_sum((0..mesh.dim()).flat_map(|i| {
        let vol = mesh.dual_volume(i);
        let (r, u) = (rd.comp(i), state.u.comp(i));
        (0..r.len()).map(move |f| 0.5 * vol * r[f] * u[f] * u[f])
    }))
}

/// Scaled internal energy `(1/eps^2) sum |K| Pi(rho theta)`.
pub fn internal_energy(mesh: &Mesh, state: &State, eps: f64, gamma: f64) -> Result<f64> {
    require_gamma(gamma)?;
    let mut terms = Vec::with_capacity(mesh.n_cells());
    for (r, t) in state.rho.iter().zip(state.theta.iter()) {
        terms.push(relative_internal_energy(r * t, gamma)?);
    }
    Ok(mesh.cell_volume() * compensated_sum(terms.into_iter()) / (eps * eps))
}

pub fn total_energy(mesh: &Mesh, state: &State, eps: f64, gamma: f64) -> Result<Energy> {
    let internal = internal_energy(mesh, state, eps, gamma)?;
    let kinetic = kinetic_energy(mesh, state);
    Ok(Energy { kinetic, internal, total: kinetic + internal })
}

/// `(sum |K| |f_K|^gamma)^(1/gamma)`.
pub fn lgamma_norm(mesh: &Mesh, f: &[f64], gamma: f64) -> f64 {
    let s = compensated_sum(f.iter().map(|v| v.abs().powf(gamma)));
    (mesh.cell_volume() * s).powf(1.0 / gamma)
}

/// Cell-centred velocity: mean of the two bounding faces per direction.
pub fn cell_velocity(mesh: &Mesh, state: &State, axis: usize) -> CellField {
    let u = state.u.comp(axis);
    CellField::from_fn(mesh, |c| 0.5 * (u[c] + u[mesh.next(axis, c)]))
}

/// `M = sqrt(|u|^2 / (gamma p / rho))` with `p = (rho theta)^gamma`.
pub fn mach_field(mesh: &Mesh, state: &State, gamma: f64) -> CellField {
    let comps: Vec<CellField> = (0..mesh.dim()).map(|i| cell_velocity(mesh, state, i)).collect();
    CellField::from_fn(mesh, |c| {
        let speed2: f64 = comps.iter().map(|u| u[c] * u[c]).sum();
        let rho = state.rho[c];
        let p = (rho * state.theta[c]).powf(gamma);
        (speed2 / (gamma * p / rho)).sqrt()
    })
}

/// Per-direction momentum `sum |D_sigma| rho_D u_sigma`.
pub fn momentum(mesh: &Mesh, state: &State) -> Vec<f64> {
    let rd = dual_density(mesh, &state.rho);
    (0..mesh.dim())
        .map(|i| {
            let (r, u) = (rd.comp(i), state.u.comp(i));
            mesh.dual_volume(i) * compensated_sum((0..r.len()).map(|f| r[f] * u[f]))
        })
        .collect()
}

fn radius_from(mesh: &Mesh, center: [f64; 2], c: usize) -> f64 {
    let x = mesh.cell_center(c);
    (x[0] - center[0]).hypot(x[1] - center[1])
}

/// Ring averages of a 2D cell field about `center` over rings of width `h`
/// up to `r_max`: `(mean radius, mean value)` per non-empty ring.
pub fn radial_profile(mesh: &Mesh, f: &[f64], center: [f64; 2], r_max: f64) -> Vec<(f64, f64)> {
    let h = mesh.min_spacing();
    let n_bins = (r_max / h).ceil().max(1.0) as usize;
    let mut bins = vec![(0.0, 0.0, 0usize); n_bins];
    for c in 0..mesh.n_cells() {
        let r = radius_from(mesh, center, c);
        if r < r_max {
            let b = &mut bins[((r / h) as usize).min(n_bins - 1)];
            b.0 += r;
            b.1 += f[c];
            b.2 += 1;
        }
    }
    bins.iter()
        .filter(|b| b.2 > 0)
        .map(|b| (b.0 / b.2 as f64, b.1 / b.2 as f64))
        .collect()
}

/// Angular variation of a 2D cell field about `center`, relative to its mean.
///
/// The ring averages of [`radial_profile`], joined linearly, define the
/// radial part. Returns the RMS of `f - profile(r)` over `r < r_max`
/// divided by the mean of `|f|` there.
pub fn radial_asymmetry(mesh: &Mesh, f: &[f64], center: [f64; 2], r_max: f64) -> f64 {
    let knots = radial_profile(mesh, f, center, r_max);
    let profile = |r: f64| {
        let k = knots.partition_point(|&(rk, _)| rk < r);
        match k {
            0 => knots[0].1,
            k if k == knots.len() => knots[k - 1].1,
            k => {
                let ((r0, f0), (r1, f1)) = (knots[k - 1], knots[k]);
                f0 + (f1 - f0) * (r - r0) / (r1 - r0)
            }
        }
    };
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for c in 0..mesh.n_cells() {
        let r = radius_from(mesh, center, c);
        if r < r_max {
            sq += (f[c] - profile(r)).powi(2);
            abs += f[c].abs();
            n += 1;
        }
    }
    (sq / n as f64).sqrt() / (abs / n as f64)
}

/// One line of the diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub mass: f64,
    pub theta_total: f64,
    pub momentum: Vec<f64>,
    pub kinetic_energy: f64,
    /// Absent when `gamma = 1`.
    pub internal_energy: Option<f64>,
    pub total_energy: Option<f64>,
    /// `|rho theta - 1|` in `L^gamma`.
    pub theta_total_deviation: f64,
    pub max_div_u: f64,
    pub min_rho: f64,
    pub min_theta: f64,
    pub newton_iterations: usize,
}

pub fn record(
    mesh: &Mesh,
    state: &State,
    eps: f64,
    gamma: f64,
    dt: f64,
    newton_iterations: usize,
) -> DiagnosticsRecord {
    let theta_total = state.theta_total();
    let deviation: Vec<f64> = theta_total.iter().map(|v| v - 1.0).collect();
    let energy = total_energy(mesh, state, eps, gamma).ok();
    DiagnosticsRecord {
        step: state.step_index,
        time: state.time,
        dt,
        mass: state.rho.integral(mesh),
        theta_total: theta_total.integral(mesh),
        momentum: momentum(mesh, state),
        kinetic_energy: kinetic_energy(mesh, state),
        internal_energy: energy.map(|e| e.internal),
        total_energy: energy.map(|e| e.total),
        theta_total_deviation: lgamma_norm(mesh, &deviation, gamma),
        max_div_u: div_cells(mesh, &state.u).max_abs(),
        min_rho: state.rho.min(),
        min_theta: state.theta.min(),
        newton_iterations,
    }
}
