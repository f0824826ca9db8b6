//! Explicit first-order Rusanov solver for the 1D scaled system in
//! conservative variables `(rho, rho u, rho theta)` on a periodic grid.
//! Used to produce reference profiles for the compressible regime.

use crate::cases::CaseSpec;
use crate::error::{Error, Result};
use crate::mesh::Point;

/// Default CFL number of the reference solver.
pub const DEFAULT_CFL: f64 = 0.45;

/// Cell-centred conservative state on a uniform periodic 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeState1D {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub momentum: Vec<f64>,
    pub theta_total: Vec<f64>,
    pub time: f64,
    pub steps: usize,
}

impl ConservativeState1D {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.momentum.iter().zip(&self.rho).map(|(m, r)| m / r).collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.theta_total.iter().zip(&self.rho).map(|(t, r)| t / r).collect()
    }

    pub fn cell(&self, k: usize) -> [f64; 3] {
        [self.rho[k], self.momentum[k], self.theta_total[k]]
    }
}

/// Sound speed `c = sqrt(gamma p / rho)` with `p = (rho theta)^gamma`.
pub fn sound_speed(rho: f64, theta_total: f64, gamma: f64) -> f64 {
    (gamma * theta_total.powf(gamma) / rho).sqrt()
}

fn physical_flux(q: [f64; 3], eps: f64, gamma: f64) -> [f64; 3] {
    let u = q[1] / q[0];
    let p = q[2].powf(gamma);
    [q[1], q[1] * u + p / (eps * eps), q[2] * u]
}

fn wave_speed(q: [f64; 3], eps: f64, gamma: f64) -> f64 {
    (q[1] / q[0]).abs() + sound_speed(q[0], q[2], gamma) / eps
}

/// `F = (f(L) + f(R))/2 - lambda (R - L)/2` with `lambda` the larger local wave speed.
pub fn rusanov_flux(left: [f64; 3], right: [f64; 3], eps: f64, gamma: f64) -> [f64; 3] {
    let (fl, fr) = (physical_flux(left, eps, gamma), physical_flux(right, eps, gamma));
    let lambda = wave_speed(left, eps, gamma).max(wave_speed(right, eps, gamma));
    std::array::from_fn(|k| 0.5 * (fl[k] + fr[k]) - 0.5 * lambda * (right[k] - left[k]))
}

/// Samples the initial data of a 1D case at `n_cells` cell centres.
pub fn initial_state(case: &CaseSpec, n_cells: usize, eps: f64) -> Result<ConservativeState1D> {
    if case.dim() != 1 {
        return Err(Error::Config(format!("{} is not a 1D case", case.name)));
    }
    if n_cells == 0 {
        return Err(Error::Config("the reference grid needs at least one cell".into()));
    }
    let (a, b) = case.extents[0];
    let h = (b - a) / n_cells as f64;
    let x: Vec<f64> = (0..n_cells).map(|k| a + (k as f64 + 0.5) * h).collect();
    let point = |x: f64| -> Point {
        let mut p = Point::default();
        p[0] = x;
        p
    };
    let rho: Vec<f64> = x.iter().map(|&x| case.rho0(&point(x), eps)).collect();
    let momentum = x.iter().zip(&rho).map(|(&x, r)| r * case.velocity0(0, &point(x), eps)).collect();
    let theta_total = x.iter().zip(&rho).map(|(&x, r)| r * case.theta0(&point(x), eps)).collect();
    Ok(ConservativeState1D { x, rho, momentum, theta_total, time: 0.0, steps: 0 })
}

/// Forward Euler with `dt = cfl h / max lambda` up to `t_end`.
pub fn run_reference(
    case: &CaseSpec,
    n_cells: usize,
    eps: f64,
    t_end: f64,
    cfl: f64,
) -> Result<ConservativeState1D> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Config(format!("reference CFL {cfl} outside (0, 1]")));
    }
    let mut s = initial_state(case, n_cells, eps)?;
    let gamma = case.gamma;
    let (a, b) = case.extents[0];
    let h = (b - a) / n_cells as f64;
    let n = n_cells;
    let mut flux = vec![[0.0; 3]; n];
    while s.time < t_end * (1.0 - 1e-14) {
        let lambda = (0..n).map(|k| wave_speed(s.cell(k), eps, gamma)).fold(0.0, f64::max);
        let dt = (cfl * h / lambda).min(t_end - s.time);
        // flux[k] sits on the left boundary of cell k
        for (k, f) in flux.iter_mut().enumerate() {
            *f = rusanov_flux(s.cell((k + n - 1) % n), s.cell(k), eps, gamma);
        }
        let r = dt / h;
        for k in 0..n {
            let (fl, fr) = (flux[k], flux[(k + 1) % n]);
            s.rho[k] -= r * (fr[0] - fl[0]);
            s.momentum[k] -= r * (fr[1] - fl[1]);
            s.theta_total[k] -= r * (fr[2] - fl[2]);
        }
        if let Some(k) = (0..n).position(|k| !(s.rho[k] > 0.0 && s.theta_total[k] > 0.0)) {
            return Err(Error::CflViolation(format!(
                "reference solver lost positivity in cell {k} at t = {}",
                s.time
            )));
        }
        s.time += dt;
        s.steps += 1;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn l1(a: &[f64], b: &[f64], h: f64) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * h
    }

    /// Cell averages of a fine profile onto a grid coarser by `ratio`.
    fn restrict(fine: &[f64], ratio: usize) -> Vec<f64> {
        fine.chunks(ratio).map(|c| c.iter().sum::<f64>() / ratio as f64).collect()
    }

    #[test]
    fn flux_examples() {
        let q = [1.0, 0.7, 1.2];
        let f = rusanov_flux(q, q, 0.5, 1.4);
        assert_eq!(f, physical_flux(q, 0.5, 1.4));
        assert!((sound_speed(1.0, 1.0, 1.4) - 1.4f64.sqrt()).abs() < 1e-15);
        assert!((sound_speed(1.0, 1.0, 1.4) - 1.18322).abs() < 1e-5);
        let (l, r) = ([1.0, 0.6, 1.0], [1.0, -0.6, 1.0]);
        assert_eq!(rusanov_flux(l, r, 1.0, 1.4)[0], 0.0);
    }

    #[test]
    fn constant_state_is_preserved() {
        let case = CaseSpec::constant(1, 1.3, 0.8, [0.4, 0.0, 0.0]);
        let s = run_reference(&case, 50, 1.0, 0.2, DEFAULT_CFL).unwrap();
        assert!(s.rho.iter().all(|&r| (r - 1.3).abs() < 1e-14));
        assert!(s.velocity().iter().all(|&u| (u - 0.4).abs() < 1e-14));
    }

    #[test]
    fn conserves_totals() {
        let case = cases::riemann_1d();
        let s0 = initial_state(&case, 400, 1.0).unwrap();
        let s = run_reference(&case, 400, 1.0, 0.05, DEFAULT_CFL).unwrap();
        for (a, b) in [(&s0.rho, &s.rho), (&s0.momentum, &s.momentum), (&s0.theta_total, &s.theta_total)] {
            let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            assert!((ta - tb).abs() <= 1e-12 * ta.abs());
        }
        // first-order Rusanov keeps theta inside its initial bounds here
        assert!(s.theta().iter().all(|&t| t > 1.0 - 1e-12 && t < 1.0 + 1e-12));
    }

    #[test]
    fn self_convergence() {
        let case = cases::riemann_1d();
        let fine = run_reference(&case, 10_000, 1.0, 0.05, DEFAULT_CFL).unwrap();
        let mut errs = Vec::new();
        for n in [1250, 2500] {
            let coarse = run_reference(&case, n, 1.0, 0.05, DEFAULT_CFL).unwrap();
            errs.push(l1(&coarse.rho, &restrict(&fine.rho, 10_000 / n), 1.0 / n as f64));
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate >= 0.7, "{errs:?}");
    }

    #[test]
    fn rejects_two_dimensional_cases() {
        assert!(run_reference(&cases::stationary_vortex(), 10, 1.0, 0.1, 0.45).is_err());
        assert!(run_reference(&cases::riemann_1d(), 10, 1.0, 0.1, 1.5).is_err());
    }
}
