//! Discrete unknowns: cell scalars, face velocities and the solver state.

use std::ops::{Deref, DerefMut};

use crate::cases::CaseSpec;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// One value per primal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField(pub Vec<f64>);

impl CellField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.n_cells()])
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Self(vec![value; mesh.n_cells()])
    }

    pub fn from_fn(mesh: &Mesh, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..mesh.n_cells()).map(f).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum_K |K| f_K`, accumulated in cell order.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        mesh.cell_volume() * compensated_sum(self.0.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for CellField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CellField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// One value per face, partitioned by the axis the face is orthogonal to.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            comps: (0..mesh.dim()).map(|i| vec![0.0; mesh.n_faces(i)]).collect(),
        }
    }

    pub fn from_components(comps: Vec<Vec<f64>>) -> Self {
        Self { comps }
    }

    pub fn from_fn(mesh: &Mesh, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            comps: (0..mesh.dim())
                .map(|i| (0..mesh.n_faces(i)).map(|s| f(i, s)).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn comp_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }
}

/// Solution at one time level: cell density and potential temperature, face velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub rho: CellField,
    pub theta: CellField,
    pub u: FaceField,
    pub time: f64,
    pub step_index: usize,
}

impl State {
    /// Total potential temperature `rho * theta`.
    pub fn theta_total(&self) -> CellField {
        CellField(self.rho.iter().zip(self.theta.iter()).map(|(r, t)| r * t).collect())
    }

    pub fn is_admissible(&self) -> bool {
        self.rho.iter().all(|&v| v > 0.0 && v.is_finite())
            && self.theta.iter().all(|&v| v > 0.0 && v.is_finite())
            && self.u.is_finite()
    }
}

/// Samples the initial data of `case` at cell centres (density, temperature)
/// and face centres (velocity components).
pub fn init_state(mesh: &Mesh, case: &CaseSpec, eps: f64) -> Result<State> {
    let rho = CellField::from_fn(mesh, |c| case.rho0(&mesh.cell_center(c), eps));
    let theta = CellField::from_fn(mesh, |c| case.theta0(&mesh.cell_center(c), eps));
    let u = FaceField::from_fn(mesh, |i, f| case.velocity0(i, &mesh.face_center(i, f), eps));

    if let Some(c) = rho.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInitialData(format!(
            "{}: density {} at cell {c}",
            case.name, rho[c]
        )));
    }
    if let Some(c) = theta.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInitialData(format!(
            "{}: potential temperature {} at cell {c}",
            case.name, theta[c]
        )));
    }
    if !u.is_finite() {
        return Err(Error::InvalidInitialData(format!("{}: non-finite velocity", case.name)));
    }
    Ok(State { rho, theta, u, time: 0.0, step_index: 0 })
}

/// `p = (rho theta)^gamma`, cellwise.
pub fn eos_pressure(theta_total: &CellField, gamma: f64) -> Result<CellField> {
    if !(gamma >= 1.0) {
        return Err(Error::Domain(format!("adiabatic index {gamma} < 1")));
    }
    if let Some(v) = theta_total.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("non-positive total potential temperature {v}")));
    }
    Ok(CellField(theta_total.iter().map(|z| z.powf(gamma)).collect()))
}

/// Neumaier summation; fixed order, so deterministic.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{self, CaseSpec};

    #[test]
    fn constant_case_samples_exactly() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 3]).unwrap();
        let case = CaseSpec::constant(1, 1.0, 1.0, [0.0; 3]).with_dim(2);
        let s = init_state(&mesh, &case, 0.5).unwrap();
        assert!(s.rho.iter().all(|&v| v == 1.0));
        assert!(s.theta.iter().all(|&v| v == 1.0));
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.time, 0.0);
    }

    #[test]
    fn colliding_pulses_velocity_vanishes_at_domain_ends() {
        let case = cases::colliding_pulses();
        for x in [-1.0, 0.0, 1.0] {
            assert!(case.velocity0(0, &[x, 0.0, 0.0], 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn vortex_outside_outer_radius_is_at_rest() {
        let case = cases::stationary_vortex();
        let x = [0.5 + 0.5, 0.5, 0.0];
        assert_eq!(case.velocity0(0, &x, 0.1), 0.0);
        assert_eq!(case.velocity0(1, &x, 0.1), 0.0);
        assert_eq!(case.theta0(&x, 0.1), 1.0);
    }

    #[test]
    fn rejects_non_positive_density() {
        let mesh = Mesh::uniform(&[(0.0, 1.0)], &[4]).unwrap();
        let case = CaseSpec::constant(1, -1.0, 1.0, [0.0; 3]);
        assert!(matches!(init_state(&mesh, &case, 1.0), Err(Error::InvalidInitialData(_))));
        let case = CaseSpec::constant(1, 1.0, 0.0, [0.0; 3]);
        assert!(matches!(init_state(&mesh, &case, 1.0), Err(Error::InvalidInitialData(_))));
    }

    #[test]
    fn pressure_law() {
        let p = eos_pressure(&CellField(vec![1.0, 4.0]), 2.0).unwrap();
        assert_eq!(p.0, vec![1.0, 16.0]);
        let p = eos_pressure(&CellField(vec![1.0]), 1.4).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(eos_pressure(&CellField(vec![0.0]), 2.0).is_err());
        assert!(eos_pressure(&CellField(vec![1.0]), 0.5).is_err());
    }

    #[test]
    fn pressure_taylor_expansion() {
        // p - 1 = gamma eps^2 k + O(eps^4) for rho theta = 1 + eps^2 k
        let (eps, k): (f64, f64) = (1e-3, 0.7);
        for gamma in [1.4, 2.0, 3.0] {
            let z = 1.0 + eps * eps * k;
            let p = eos_pressure(&CellField(vec![z]), gamma).unwrap()[0];
            let second = 0.5 * gamma * (gamma - 1.0) * (eps * eps * k).powi(2);
            assert!((p - 1.0 - gamma * eps * eps * k).abs() <= 2.0 * second + 1e-15);
        }
    }

    #[test]
    fn low_mach_pulses_have_unit_pressure() {
        let mesh = Mesh::uniform(&[(-1.0, 1.0)], &[200]).unwrap();
        let case = cases::colliding_pulses();
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let s = init_state(&mesh, &case, eps).unwrap();
            let p = eos_pressure(&s.theta_total(), case.gamma).unwrap();
            let dev = p.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
            assert!(dev <= 2.0 * case.gamma * eps + 1e-14);
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn midpoint_mass_converges_at_second_order() {
        // Richardson estimate on the vortex density, which is C^1 with curvature jumps.
        let case = cases::stationary_vortex();
        let mass = |n: usize| {
            let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap();
            init_state(&mesh, &case, 1.0).unwrap().rho.integral(&mesh)
        };
        let (m1, m2, m3) = (mass(24), mass(48), mass(96));
        let order = ((m1 - m2) / (m2 - m3)).abs().log2();
        assert!(order >= 1.8, "observed order {order}");
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v.into_iter()), 2.0);
    }
}
