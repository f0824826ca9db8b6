//! Benchmark catalog: initial data, domains and run parameters.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Stable CLI identifiers of the built-in benchmarks.
pub const CASE_NAMES: [&str; 6] = [
    "colliding-pulses",
    "extreme-riemann",
    "riemann-1d",
    "stationary-vortex",
    "cylindrical-explosion",
    "baroclinic",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseKind {
    CollidingPulses,
    ExtremeRiemann,
    Riemann1d,
    StationaryVortex,
    CylindricalExplosion,
    Baroclinic,
    /// Spatially constant state, used for fixed-point checks.
    Constant { rho: f64, theta: f64, u: [f64; 3] },
}

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub name: String,
    pub kind: CaseKind,
    pub extents: Vec<(f64, f64)>,
    pub default_counts: Vec<usize>,
    pub gamma: f64,
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// Output artifacts the case feeds.
    pub artifacts: Vec<String>,
}

// Stationary vortex parameters.
pub const VORTEX_CENTER: (f64, f64) = (0.5, 0.5);
pub const VORTEX_A: f64 = 0.1;
pub const VORTEX_R1: f64 = 0.2;
pub const VORTEX_R2: f64 = 0.4;

impl CaseSpec {
    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "colliding-pulses" => Ok(colliding_pulses()),
            "extreme-riemann" => Ok(extreme_riemann()),
            "riemann-1d" => Ok(riemann_1d()),
            "stationary-vortex" => Ok(stationary_vortex()),
            "cylindrical-explosion" => Ok(cylindrical_explosion()),
            "baroclinic" => Ok(baroclinic()),
            other => Err(Error::Config(format!(
                "unknown case '{other}' (expected one of {})",
                CASE_NAMES.join(", ")
            ))),
        }
    }

    pub fn constant(dim: usize, rho: f64, theta: f64, u: [f64; 3]) -> Self {
        Self {
            name: "constant".into(),
            kind: CaseKind::Constant { rho, theta, u },
            extents: vec![(0.0, 1.0); dim],
            default_counts: vec![16; dim],
            gamma: 1.4,
            eps_list: vec![1.0],
            t_end: 0.1,
            snapshot_times: vec![],
            artifacts: vec![],
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.extents = vec![(0.0, 1.0); dim];
        self.default_counts = vec![16; dim];
        self
    }

    pub fn default_eps(&self) -> f64 {
        self.eps_list[0]
    }

    pub fn rho0(&self, x: &Point, eps: f64) -> f64 {
        match self.kind {
            CaseKind::CollidingPulses => 0.955 + 0.5 * eps * (1.0 - (2.0 * PI * x[0]).cos()),
            CaseKind::ExtremeRiemann | CaseKind::Riemann1d => 1.0,
            CaseKind::StationaryVortex => {
                1.0 + 0.5 * eps * eps * vortex_density_integral(vortex_radius(x))
            }
            CaseKind::CylindricalExplosion => {
                if x[0].hypot(x[1]) <= 0.5 {
                    1.0 + eps * eps
                } else {
                    1.0
                }
            }
            CaseKind::Baroclinic => {
                1.0 + eps / 2000.0 * (1.0 + (PI * x[0]).cos()) + baroclinic_phi(x[1])
            }
            CaseKind::Constant { rho, .. } => rho,
        }
    }

    pub fn theta0(&self, x: &Point, eps: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            CaseKind::CollidingPulses => {
                let pressure = 1.0 + eps * g * (1.0 - (2.0 * PI * x[0]).cos());
                pressure.powf(1.0 / g) / self.rho0(x, eps)
            }
            CaseKind::ExtremeRiemann => 0.52,
            CaseKind::Riemann1d | CaseKind::StationaryVortex | CaseKind::CylindricalExplosion => 1.0,
            CaseKind::Baroclinic => {
                let pressure = 1.0 + 0.5 * eps * g * (1.0 + (PI * x[0]).cos());
                pressure.powf(1.0 / g) / self.rho0(x, eps)
            }
            CaseKind::Constant { theta, .. } => theta,
        }
    }

    /// Velocity component along `axis` at point `x`.
    pub fn velocity0(&self, axis: usize, x: &Point, eps: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            CaseKind::CollidingPulses => {
                let s = if x[0] > 0.0 {
                    1.0
                } else if x[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                -s * g.sqrt() * (1.0 - (2.0 * PI * x[0]).cos())
            }
            CaseKind::ExtremeRiemann => {
                // Periodic wrap onto [0, 1); points on a jump take the mean of both sides.
                let xr = x[0] - x[0].floor();
                if xr == 0.0 || xr == 0.5 {
                    0.0
                } else if xr < 0.5 {
                    -2.0
                } else {
                    2.0
                }
            }
            CaseKind::Riemann1d => {
                let xr = x[0];
                let e2 = 0.5 * eps * eps;
                if xr <= 0.2 || xr >= 0.8 {
                    1.0 - e2
                } else if (0.25..=0.75).contains(&xr) {
                    1.0 + e2
                } else {
                    1.0
                }
            }
            CaseKind::StationaryVortex => {
                let (xc, yc) = VORTEX_CENTER;
                let r = vortex_radius(x);
                if r == 0.0 {
                    return 0.0;
                }
                let ut = vortex_angular_velocity(r);
                match axis {
                    0 => ut * (x[1] - yc) / r,
                    1 => -ut * (x[0] - xc) / r,
                    _ => 0.0,
                }
            }
            CaseKind::CylindricalExplosion => {
                let r = x[0].hypot(x[1]);
                if r <= 1e-15 || axis > 1 {
                    return 0.0;
                }
                let alpha = (1.0 - r).max(0.0) * (1.0 - (-16.0 * r * r).exp());
                -alpha / self.rho0(x, eps) * x[axis] / r
            }
            CaseKind::Baroclinic => {
                if axis == 0 {
                    0.5 * g.sqrt() * (1.0 + (PI * x[0]).cos())
                } else {
                    0.0
                }
            }
            CaseKind::Constant { u, .. } => u[axis],
        }
    }
}

fn vortex_radius(x: &Point) -> f64 {
    (x[0] - VORTEX_CENTER.0).hypot(x[1] - VORTEX_CENTER.1)
}

/// Vortex coefficients `(a1, a2, a3)`.
pub fn vortex_coefficients() -> (f64, f64, f64) {
    let (a, r1, r2) = (VORTEX_A, VORTEX_R1, VORTEX_R2);
    (a / r1, -a * r2 / (r1 - r2), a / (r1 - r2))
}

/// Piecewise-linear angular velocity profile of the stationary vortex.
pub fn vortex_angular_velocity(r: f64) -> f64 {
    let (a1, a2, a3) = vortex_coefficients();
    if r <= VORTEX_R1 {
        a1 * r
    } else if r <= VORTEX_R2 {
        a2 + a3 * r
    } else {
        0.0
    }
}

/// Closed form of `int_0^r u(s)^2 / s ds` for the vortex profile.
pub fn vortex_density_integral(r: f64) -> f64 {
    let (a1, a2, a3) = vortex_coefficients();
    let (r1, r2) = (VORTEX_R1, VORTEX_R2);
    let inner = |r: f64| 0.5 * a1 * a1 * r * r;
    let ring = |r: f64| {
        inner(r1)
            + a2 * a2 * (r / r1).ln()
            + 2.0 * a2 * a3 * (r - r1)
            + 0.5 * a3 * a3 * (r * r - r1 * r1)
    };
    if r <= r1 {
        inner(r)
    } else if r <= r2 {
        ring(r)
    } else {
        ring(r2)
    }
}

/// Stratification profile; the interface value `y = 0.2` belongs to the lower layer.
pub fn baroclinic_phi(y: f64) -> f64 {
    if (0.0..=0.2).contains(&y) {
        4.5 * y
    } else {
        4.5 * y - 1.8
    }
}

pub fn colliding_pulses() -> CaseSpec {
    CaseSpec {
        name: "colliding-pulses".into(),
        kind: CaseKind::CollidingPulses,
        extents: vec![(-1.0, 1.0)],
        default_counts: vec![200],
        gamma: 1.4,
        eps_list: vec![0.1],
        t_end: 0.08,
        snapshot_times: vec![0.04, 0.08],
        artifacts: vec!["profiles".into(), "energy-series".into()],
    }
}

pub fn extreme_riemann() -> CaseSpec {
    CaseSpec {
        name: "extreme-riemann".into(),
        kind: CaseKind::ExtremeRiemann,
        extents: vec![(0.0, 1.0)],
        default_counts: vec![100],
        gamma: 1.4,
        eps_list: vec![1.0],
        t_end: 0.15,
        snapshot_times: vec![0.15],
        artifacts: vec!["profiles".into(), "positivity-series".into()],
    }
}

pub fn riemann_1d() -> CaseSpec {
    CaseSpec {
        name: "riemann-1d".into(),
        kind: CaseKind::Riemann1d,
        extents: vec![(0.0, 1.0)],
        default_counts: vec![300],
        gamma: 1.4,
        eps_list: vec![1.0, 0.01],
        t_end: 0.05,
        snapshot_times: vec![0.05],
        artifacts: vec!["profiles".into(), "reference-profile".into()],
    }
}

pub fn stationary_vortex() -> CaseSpec {
    CaseSpec {
        name: "stationary-vortex".into(),
        kind: CaseKind::StationaryVortex,
        extents: vec![(0.0, 1.0), (0.0, 1.0)],
        default_counts: vec![100, 100],
        gamma: 2.0,
        eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
        t_end: 1.0,
        snapshot_times: vec![0.0, 1.0],
        artifacts: ["eoc-table", "limit-table", "mach-field", "kinetic-energy-series", "decay-sweep"]
            .map(String::from)
            .to_vec(),
    }
}

pub fn cylindrical_explosion() -> CaseSpec {
    CaseSpec {
        name: "cylindrical-explosion".into(),
        kind: CaseKind::CylindricalExplosion,
        extents: vec![(-1.0, 1.0), (-1.0, 1.0)],
        default_counts: vec![200, 200],
        gamma: 1.0,
        eps_list: vec![1.0, 1e-4],
        t_end: 0.05,
        snapshot_times: vec![0.05],
        artifacts: vec!["density-field".into(), "divergence-field".into()],
    }
}

pub fn baroclinic() -> CaseSpec {
    CaseSpec {
        name: "baroclinic".into(),
        kind: CaseKind::Baroclinic,
        extents: vec![(-1.0, 1.0), (0.0, 0.4)],
        default_counts: vec![800, 160],
        gamma: 1.4,
        eps_list: vec![0.05],
        t_end: 1.0,
        snapshot_times: vec![0.0, 0.5, 1.0],
        artifacts: vec!["density-field".into()],
    }
}

pub fn all_cases() -> Vec<CaseSpec> {
    CASE_NAMES.iter().map(|n| CaseSpec::by_name(n).unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::init_state;
    use crate::mesh::Mesh;
    use approx::assert_relative_eq;

    fn pt(x: f64, y: f64) -> Point {
        [x, y, 0.0]
    }

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (simpson(f, a, m), simpson(f, m, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 50)
    }

    #[test]
    fn vortex_profile_values() {
        assert_relative_eq!(vortex_angular_velocity(VORTEX_R1), 0.1, max_relative = 1e-14);
        assert!(vortex_angular_velocity(VORTEX_R2).abs() < 1e-15);
        assert_eq!(vortex_angular_velocity(0.5), 0.0);
    }

    #[test]
    fn vortex_density_integral_matches_quadrature() {
        let f = |s: f64| {
            if s == 0.0 {
                0.0
            } else {
                vortex_angular_velocity(s).powi(2) / s
            }
        };
        for r in [0.05, 0.2, 0.25, 0.33, 0.4, 0.6] {
            // integrate piecewise so the quadrature never straddles a kink
            let mut q = 0.0;
            let mut a = 0.0;
            for b in [VORTEX_R1, VORTEX_R2, r] {
                let b = b.min(r);
                if b > a {
                    q += adaptive_simpson(&f, a, b, 1e-15);
                    a = b;
                }
            }
            assert!(
                (q - vortex_density_integral(r)).abs() <= 1e-12,
                "r={r}: quadrature {q}, closed form {}",
                vortex_density_integral(r)
            );
        }
        // density outside the vortex is 1 + eps^2/2 * I_total
        let total = vortex_density_integral(VORTEX_R2);
        let c = stationary_vortex();
        assert_relative_eq!(c.rho0(&pt(0.95, 0.5), 0.1), 1.0 + 0.005 * total, max_relative = 1e-15);
    }

    #[test]
    fn colliding_pulse_values() {
        let c = colliding_pulses();
        let eps = 0.1;
        assert_relative_eq!(c.rho0(&pt(0.5, 0.0), eps), 0.955 + eps, max_relative = 1e-15);
        assert_relative_eq!(c.velocity0(0, &pt(0.5, 0.0), eps), -2.0 * 1.4f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.velocity0(0, &pt(0.5, 0.0), eps), -2.366_431_913_239_847, max_relative = 1e-12);
        // as eps -> 0: rho -> 0.955 and (rho theta)^gamma -> 1
        let x = pt(0.3, 0.0);
        let tiny = 1e-9;
        assert!((c.rho0(&x, tiny) - 0.955).abs() < 1e-8);
        let p = (c.rho0(&x, tiny) * c.theta0(&x, tiny)).powf(1.4);
        assert!((p - 1.0).abs() < 1e-8);
    }

    #[test]
    fn extreme_riemann_is_mirror_symmetric() {
        let c = extreme_riemann();
        assert_eq!(c.velocity0(0, &pt(0.25, 0.0), 1.0), -2.0);
        assert_eq!(c.velocity0(0, &pt(0.75, 0.0), 1.0), 2.0);
        assert_eq!(c.theta0(&pt(0.1, 0.0), 1.0), 0.52);
        let mesh = Mesh::uniform(&c.extents, &c.default_counts).unwrap();
        let s = init_state(&mesh, &c, 1.0).unwrap();
        let n = mesh.n_cells();
        let u = s.u.comp(0);
        // face f sits at x = f h; its mirror image is face n - f
        for f in 0..n {
            assert_eq!(u[f], -u[(n - f) % n]);
        }
    }

    #[test]
    fn riemann_plateaus() {
        let c = riemann_1d();
        let eps = 0.01;
        assert_relative_eq!(c.velocity0(0, &pt(0.1, 0.0), eps), 1.0 - 5e-5, max_relative = 1e-15);
        assert_relative_eq!(c.velocity0(0, &pt(0.5, 0.0), eps), 1.0 + 5e-5, max_relative = 1e-15);
        assert_eq!(c.velocity0(0, &pt(0.22, 0.0), eps), 1.0);
    }

    #[test]
    fn riemann_jumps_fall_on_cell_boundaries() {
        for c in [riemann_1d(), extreme_riemann()] {
            let n = c.default_counts[0] as f64;
            for jump in [0.2, 0.25, 0.5, 0.75, 0.8] {
                let k = jump * n;
                if c.kind == CaseKind::ExtremeRiemann && jump != 0.5 {
                    continue;
                }
                assert!((k - k.round()).abs() < 1e-9, "{}: jump {jump}", c.name);
            }
        }
    }

    #[test]
    fn cylindrical_explosion_values() {
        let c = cylindrical_explosion();
        assert_eq!(c.velocity0(0, &pt(1.0, 0.0), 1.0), 0.0);
        assert_eq!(c.velocity0(0, &pt(0.0, 0.0), 1.0), 0.0);
        assert_eq!(c.rho0(&pt(0.1, 0.1), 1e-4), 1.0 + 1e-8);
        assert!(c.velocity0(0, &pt(0.3, 0.0), 1.0) < 0.0);
    }

    #[test]
    fn baroclinic_values() {
        let c = baroclinic();
        assert_relative_eq!(baroclinic_phi(0.2), 0.9, max_relative = 1e-15);
        assert_relative_eq!(baroclinic_phi(0.2 + 1e-12), -0.9, max_relative = 1e-9);
        assert!(c.velocity0(0, &pt(1.0, 0.1), 0.05).abs() < 1e-15);
        assert!(c.velocity0(0, &pt(-1.0, 0.1), 0.05).abs() < 1e-15);
        assert_eq!(c.velocity0(1, &pt(0.0, 0.1), 0.05), 0.0);
    }

    #[test]
    fn every_case_is_admissible_for_every_listed_eps() {
        for c in all_cases() {
            // coarse grids keep this fast; positivity only depends on pointwise values
            let counts: Vec<usize> = c.default_counts.iter().map(|&n| n.min(64)).collect();
            let mesh = Mesh::uniform(&c.extents, &counts).unwrap();
            for &eps in &c.eps_list {
                let s = init_state(&mesh, &c, eps).unwrap();
                assert!(s.is_admissible(), "{} eps={eps}", c.name);
            }
        }
    }

    #[test]
    fn unknown_case_is_a_config_error() {
        assert!(matches!(CaseSpec::by_name("nope"), Err(Error::Config(_))));
        for n in CASE_NAMES {
            assert_eq!(CaseSpec::by_name(n).unwrap().name, n);
        }
    }
}
