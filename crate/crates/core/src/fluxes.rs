//! Primal fluxes: upwind mass flux, stabilising velocity shift and the
//! sign-split upwind flux of the total potential temperature.
//!
//! Fluxes are stored once per face as `F_{sigma,K}` for the lower owner `K`.

use crate::discrete_ops::grad_faces;
use crate::fields::FaceField;
use crate::mesh::Mesh;

/// `F_{sigma,K} = |sigma| (rho_K u^+ + rho_L u^-)` per face.
pub fn mass_flux(mesh: &Mesh, rho: &[f64], u: &FaceField) -> FaceField {
    FaceField::from_fn(mesh, |i, f| {
        let (k, l) = mesh.face_cells(i, f);
        let v = u.comp(i)[f];
        mesh.face_area(i) * (rho[k] * v.max(0.0) + rho[l] * v.min(0.0))
    })
}

/// `delta u = (eta dt / eps^2) grad p`.
pub fn stab_shift(mesh: &Mesh, p: &[f64], eta: f64, dt: f64, eps: f64) -> FaceField {
    let scale = eta * dt / (eps * eps);
    let mut g = grad_faces(mesh, p);
    for i in 0..mesh.dim() {
        g.comp_mut(i).iter_mut().for_each(|v| *v *= scale);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSplitVelocity {
    pub plus: f64,
    pub minus: f64,
}

/// `v_+ = max(u,0) - min(du,0)`, `v_- = min(u,0) - max(du,0)`.
#[inline]
pub fn sign_split(u: f64, du: f64) -> SignSplitVelocity {
    SignSplitVelocity {
        plus: u.max(0.0) - du.min(0.0),
        minus: u.min(0.0) - du.max(0.0),
    }
}

/// `F_{sigma,K} = |sigma| (Theta_K v_+ + Theta_L v_-)` per face.
pub fn temp_flux(mesh: &Mesh, theta_total: &[f64], u: &FaceField, du: &FaceField) -> FaceField {
    FaceField::from_fn(mesh, |i, f| {
        let (k, l) = mesh.face_cells(i, f);
        let s = sign_split(u.comp(i)[f], du.comp(i)[f]);
        mesh.face_area(i) * (theta_total[k] * s.plus + theta_total[l] * s.minus)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_ops::flux_divergence;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn mass_flux_examples() {
        let m = Mesh::uniform(&[(0.0, 4.0)], &[4]).unwrap();
        let f = mass_flux(&m, &[1.0; 4], &FaceField::from_components(vec![vec![2.0; 4]]));
        assert!(f.comp(0).iter().all(|&v| v == 2.0));
        // |sigma| = 0.5 on a 2D grid with dy = 0.5
        let m = Mesh::uniform(&[(0.0, 2.0), (0.0, 1.0)], &[2, 2]).unwrap();
        let mut u = FaceField::zeros(&m);
        u.comp_mut(0)[1] = -1.0;
        let rho = [2.0, 3.0, 1.0, 1.0];
        let f = mass_flux(&m, &rho, &u);
        assert_eq!(f.comp(0)[1], -1.5);
        assert_eq!(mass_flux(&m, &rho, &FaceField::zeros(&m)).max_abs(), 0.0);
    }

    #[test]
    fn stab_shift_scaling() {
        let m = Mesh::uniform(&[(0.0, 1.0)], &[8]).unwrap();
        let p: Vec<f64> = (0..8).map(|c| (c as f64).sin() + 2.0).collect();
        assert_eq!(stab_shift(&m, &[1.0; 8], 1.5, 0.1, 0.1).max_abs(), 0.0);
        let a = stab_shift(&m, &p, 1.5, 0.1, 1.0);
        let b = stab_shift(&m, &p, 3.0, 0.1, 1.0);
        let c = stab_shift(&m, &p, 1.5, 0.1, 1e-2);
        for f in 0..8 {
            assert_eq!(b.comp(0)[f], 2.0 * a.comp(0)[f]);
            assert!((c.comp(0)[f] - 1e4 * a.comp(0)[f]).abs() <= 1e-10 * c.comp(0)[f].abs());
        }
    }

    #[test]
    fn sign_split_examples() {
        assert_eq!(sign_split(1.0, 0.3), SignSplitVelocity { plus: 1.0, minus: -0.3 });
        assert_eq!(sign_split(-1.0, -0.2), SignSplitVelocity { plus: 0.2, minus: -1.0 });
        assert_eq!(sign_split(0.0, 0.0), SignSplitVelocity { plus: 0.0, minus: 0.0 });
        let mut seed = 1;
        for _ in 0..1000 {
            let (u, du) = (lcg(&mut seed) - 0.5, lcg(&mut seed) - 0.5);
            let s = sign_split(u, du);
            assert!(s.plus >= 0.0 && s.minus <= 0.0);
            assert!((s.plus + s.minus - (u - du)).abs() < 1e-15);
        }
    }

    #[test]
    fn temp_flux_examples() {
        let m = Mesh::uniform(&[(0.0, 2.0)], &[2]).unwrap();
        let u = FaceField::from_components(vec![vec![1.0; 2]]);
        let du = FaceField::from_components(vec![vec![0.3; 2]]);
        // face 1: K = cell 0 (Theta 1), L = cell 1 (Theta 2)
        let f = temp_flux(&m, &[1.0, 2.0], &u, &du);
        assert!((f.comp(0)[1] - 0.4).abs() < 1e-15);

        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[3, 3]).unwrap();
        let u = FaceField::from_fn(&m, |_, _| 0.8);
        let f = temp_flux(&m, &[1.0; 9], &u, &FaceField::zeros(&m));
        assert!(f.components().iter().flatten().all(|&v| (v - 0.8 / 3.0).abs() < 1e-15));
        assert!(flux_divergence(&m, &f).max_abs() < 1e-14);
    }

    #[test]
    fn temp_flux_without_shift_is_mass_flux() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 5]).unwrap();
        let mut seed = 5;
        let theta: Vec<f64> = (0..20).map(|_| 0.5 + lcg(&mut seed)).collect();
        let u = FaceField::from_fn(&m, |_, _| lcg(&mut seed) - 0.5);
        assert_eq!(
            temp_flux(&m, &theta, &u, &FaceField::zeros(&m)),
            mass_flux(&m, &theta, &u)
        );
    }

    #[test]
    fn fluxes_are_conservative() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[6, 5]).unwrap();
        let mut seed = 9;
        for _ in 0..50 {
            let theta: Vec<f64> = (0..30).map(|_| 0.5 + lcg(&mut seed)).collect();
            let u = FaceField::from_fn(&m, |_, _| lcg(&mut seed) - 0.5);
            let du = FaceField::from_fn(&m, |_, _| lcg(&mut seed) - 0.5);
            let total: f64 = flux_divergence(&m, &temp_flux(&m, &theta, &u, &du)).iter().sum();
            assert!(total.abs() < 1e-12);
        }
    }
}
