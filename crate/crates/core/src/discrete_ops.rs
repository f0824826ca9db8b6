//! Discrete MAC operators: face gradient, cell divergence and the dual-cell
//! quantities entering the momentum balance.
//!
//! The dual flux across the lower `j`-boundary of the dual cell `f` of family
//! `i` is the half-sum of the two primal `j`-fluxes of the cells `f - e_i` and
//! `f` that the dual cell straddles. For `j = i` these are the two faces of the
//! cell `f - e_i`; for `j != i` they are the two half-faces that make up the
//! dual boundary. With this choice the dual mass balance holds exactly.

use crate::fields::{CellField, FaceField};
use crate::mesh::Mesh;

/// `(grad p)_sigma = |sigma| (p_L - p_K) / |D_sigma|`.
pub fn grad_faces(mesh: &Mesh, p: &[f64]) -> FaceField {
    FaceField::from_fn(mesh, |i, f| {
        let (k, l) = mesh.face_cells(i, f);
        mesh.face_area(i) * (p[l] - p[k]) / mesh.dual_volume(i)
    })
}

/// `(div u)_K = (1/|K|) sum_sigma |sigma| u_{sigma,K}`.
pub fn div_cells(mesh: &Mesh, u: &FaceField) -> CellField {
    flux_divergence(mesh, &scaled_by_area(mesh, u))
}

/// `(1/|K|) sum_sigma F_{sigma,K}` for fluxes stored with the lower-owner sign convention.
pub fn flux_divergence(mesh: &Mesh, flux: &FaceField) -> CellField {
    let mut out = vec![0.0; mesh.n_cells()];
    let inv = 1.0 / mesh.cell_volume();
    for i in 0..mesh.dim() {
        let g = flux.comp(i);
        let next = mesh.next_table(i);
        for (c, o) in out.iter_mut().enumerate() {
            *o += (g[next[c]] - g[c]) * inv;
        }
    }
    CellField(out)
}

fn scaled_by_area(mesh: &Mesh, u: &FaceField) -> FaceField {
    FaceField::from_fn(mesh, |i, f| mesh.face_area(i) * u.comp(i)[f])
}

/// `rho_D = (|K| rho_K + |L| rho_L) / (2 |D_sigma|)`, the arithmetic mean on uniform grids.
pub fn dual_density(mesh: &Mesh, rho: &[f64]) -> FaceField {
    FaceField::from_fn(mesh, |i, f| {
        let (k, l) = mesh.face_cells(i, f);
        0.5 * (rho[k] + rho[l])
    })
}

/// Dual-cell data for the momentum balance.
#[derive(Debug, Clone)]
pub struct DualMassBalanceData {
    pub rho_dual: FaceField,
    /// `fluxes[i]` holds, per axis `j`, the flux across the lower `j`-boundary
    /// of every dual cell of family `i` (oriented along `+e_j`).
    pub fluxes: Vec<FaceField>,
}

impl DualMassBalanceData {
    /// Upwind velocity across the lower `j`-boundary of dual cell `f` of family `i`.
    #[inline]
    pub fn upwind_velocity(&self, mesh: &Mesh, u: &FaceField, i: usize, j: usize, f: usize) -> f64 {
        let flux = self.fluxes[i].comp(j)[f];
        let ui = u.comp(i);
        let below = ui[mesh.prev(j, f)];
        if flux > 0.0 {
            below
        } else if flux < 0.0 {
            ui[f]
        } else {
            0.5 * (below + ui[f])
        }
    }

    /// `(1/|D_sigma|) sum_eps F_{eps,sigma} u_{eps,up}` for every face.
    pub fn convection(&self, mesh: &Mesh, u: &FaceField) -> FaceField {
        let dim = mesh.dim();
        let mut out = FaceField::zeros(mesh);
        let mut carried = vec![0.0; mesh.n_cells()];
        for i in 0..dim {
            let inv = 1.0 / mesh.dual_volume(i);
            for j in 0..dim {
                for (f, c) in carried.iter_mut().enumerate() {
                    *c = self.fluxes[i].comp(j)[f] * self.upwind_velocity(mesh, u, i, j, f);
                }
                let next = mesh.next_table(j);
                for (f, o) in out.comp_mut(i).iter_mut().enumerate() {
                    *o += (carried[next[f]] - carried[f]) * inv;
                }
            }
        }
        out
    }

    /// Dual flux divergence `(1/|D_sigma|) sum_eps F_{eps,sigma}`.
    pub fn divergence(&self, mesh: &Mesh) -> FaceField {
        let dim = mesh.dim();
        let mut out = FaceField::zeros(mesh);
        for i in 0..dim {
            let inv = 1.0 / mesh.dual_volume(i);
            for j in 0..dim {
                let g = self.fluxes[i].comp(j);
                let next = mesh.next_table(j);
                for (f, o) in out.comp_mut(i).iter_mut().enumerate() {
                    *o += (g[next[f]] - g[f]) * inv;
                }
            }
        }
        out
    }
}

/// Assembles the dual densities and dual mass fluxes from the primal mass fluxes.
pub fn dual_momentum_fluxes(mesh: &Mesh, rho: &[f64], primal: &FaceField) -> DualMassBalanceData {
    let dim = mesh.dim();
    let fluxes = (0..dim)
        .map(|i| {
            let prev_i = mesh.prev_table(i);
            FaceField::from_fn(mesh, |j, f| 0.5 * (primal.comp(j)[prev_i[f]] + primal.comp(j)[f]))
        })
        .collect();
    DualMassBalanceData { rho_dual: dual_density(mesh, rho), fluxes }
}
