//! Uniform periodic MAC grid.
//!
//! Cells are stored row-major with the first axis varying fastest. Faces are
//! partitioned by the axis they are orthogonal to; within axis `i` the face
//! with index `f` is the *lower* `i`-face of cell `f`, i.e. it separates the
//! cell `f - e_i` (its lower owner `K`, with `e_i . nu_{sigma,K} = +1`) from
//! cell `f` (its upper owner `L`). Periodic wrap makes every face internal, so
//! each axis has exactly as many faces as there are cells.
//!
//! The dual cell `D_sigma` of a face spans the two adjacent half cells. Its
//! boundary in axis `j` is indexed the same way: the lower `j`-boundary of the
//! dual cell `f` separates it from the dual cell `f - e_j` of the same family.

use crate::error::{Error, Result};

/// Largest supported dimension of the data model; only 1 and 2 are built.
pub const MAX_DIM: usize = 3;

pub type Point = [f64; MAX_DIM];

#[derive(Debug, Clone)]
pub struct Mesh {
    counts: Vec<usize>,
    lower: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    n_cells: usize,
    cell_volume: f64,
    face_area: Vec<f64>,
    // prev[i][c] = index of c - e_i, next[i][c] = index of c + e_i (periodic)
    prev: Vec<Vec<usize>>,
    next: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a periodic uniform grid on the box `extents` with `counts` cells per axis.
    pub fn uniform(extents: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        let dim = counts.len();
        if dim == 0 || dim > 2 {
            return Err(Error::Config(format!(
                "only 1D and 2D grids are supported (got {dim} axes)"
            )));
        }
        if extents.len() != dim {
            return Err(Error::Config(format!(
                "{} extents given for {} axes",
                extents.len(),
                dim
            )));
        }
        for (axis, (&n, &(a, b))) in counts.iter().zip(extents).enumerate() {
            if n == 0 {
                return Err(Error::Config(format!("axis {axis}: cell count must be positive")));
            }
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Config(format!(
                    "axis {axis}: degenerate extent [{a}, {b}]"
                )));
            }
        }

        let spacing: Vec<f64> = counts
            .iter()
            .zip(extents)
            .map(|(&n, &(a, b))| (b - a) / n as f64)
            .collect();
        let mut strides = Vec::with_capacity(dim);
        let mut s = 1;
        for &n in counts {
            strides.push(s);
            s *= n;
        }
        let n_cells = s;
        let cell_volume: f64 = spacing.iter().product();
        let face_area = (0..dim).map(|i| cell_volume / spacing[i]).collect();

        let mut prev = vec![vec![0; n_cells]; dim];
        let mut next = vec![vec![0; n_cells]; dim];
        for c in 0..n_cells {
            for i in 0..dim {
                let k = (c / strides[i]) % counts[i];
                let base = c - k * strides[i];
                prev[i][c] = base + ((k + counts[i] - 1) % counts[i]) * strides[i];
                next[i][c] = base + ((k + 1) % counts[i]) * strides[i];
            }
        }

        Ok(Self {
            counts: counts.to_vec(),
            lower: extents.iter().map(|e| e.0).collect(),
            spacing,
            strides,
            n_cells,
            cell_volume,
            face_area,
            prev,
            next,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of faces orthogonal to axis `i` (equal to the cell count under periodicity).
    pub fn n_faces(&self, _axis: usize) -> usize {
        self.n_cells
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        let a = self.lower[axis];
        (a, a + self.spacing[axis] * self.counts[axis] as f64)
    }

    /// `|K|`, identical for every cell.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `|sigma|` for faces orthogonal to axis `i`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.face_area[axis]
    }

    /// `|D_sigma| = (|K| + |L|) / 2` for faces orthogonal to axis `i`.
    pub fn dual_volume(&self, _axis: usize) -> f64 {
        0.5 * (self.cell_volume + self.cell_volume)
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume * self.n_cells as f64
    }

    #[inline]
    pub fn prev(&self, axis: usize, c: usize) -> usize {
        self.prev[axis][c]
    }

    #[inline]
    pub fn next(&self, axis: usize, c: usize) -> usize {
        self.next[axis][c]
    }

    pub fn prev_table(&self, axis: usize) -> &[usize] {
        &self.prev[axis]
    }

    pub fn next_table(&self, axis: usize) -> &[usize] {
        &self.next[axis]
    }

    /// Owners `(K, L)` of face `f` on axis `i`, with `nu_{sigma,K} = +e_i`.
    #[inline]
    pub fn face_cells(&self, axis: usize, f: usize) -> (usize, usize) {
        (self.prev[axis][f], f)
    }

    /// Faces of cell `c` as `(axis, face, e_i . nu_{sigma,K})`.
    pub fn cell_faces(&self, c: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |i| [(i, c, -1.0), (i, self.next[i][c], 1.0)])
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .zip(&self.counts)
            .map(|((&k, &s), &n)| (k % n) * s)
            .sum()
    }

    pub fn cell_multi_index(&self, c: usize) -> [usize; MAX_DIM] {
        let mut m = [0; MAX_DIM];
        for i in 0..self.dim() {
            m[i] = (c / self.strides[i]) % self.counts[i];
        }
        m
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let m = self.cell_multi_index(c);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            x[i] = self.lower[i] + (m[i] as f64 + 0.5) * self.spacing[i];
        }
        x
    }

    pub fn face_center(&self, axis: usize, f: usize) -> Point {
        let mut x = self.cell_center(f);
        x[axis] -= 0.5 * self.spacing[axis];
        x
    }

    /// `|dK| / |K|` with `|dK|` the summed measure of the faces of `K`.
    pub fn perimeter_ratio(&self, _c: usize) -> f64 {
        let perimeter: f64 = (0..self.dim()).map(|i| 2.0 * self.face_area[i]).sum();
        perimeter / self.cell_volume
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_partition() {
        let m = Mesh::uniform(&[(0.0, 1.0)], &[4]).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_faces(0), 4);
        assert_relative_eq!(m.cell_volume(), 0.25);
        assert_relative_eq!(m.dual_volume(0), 0.25);
        assert_relative_eq!(m.face_area(0), 1.0);
        assert_relative_eq!(m.perimeter_ratio(0), 8.0);
    }

    #[test]
    fn two_dimensional_partition() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2]).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_relative_eq!(m.cell_volume(), 0.25);
        assert_eq!(m.n_faces(0), 4);
        assert_relative_eq!(m.face_area(0), 0.5);
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[10, 10]).unwrap();
        assert_relative_eq!(m.perimeter_ratio(7), 40.0, max_relative = 1e-12);
    }

    #[test]
    fn baroclinic_grid_geometry() {
        let m = Mesh::uniform(&[(-1.0, 1.0), (0.0, 0.4)], &[800, 160]).unwrap();
        assert_relative_eq!(m.cell_volume(), 6.25e-6, max_relative = 1e-12);
        let (dx, dy) = (2.0 / 800.0, 0.4 / 160.0);
        assert_relative_eq!(
            m.perimeter_ratio(0),
            2.0 * (dx + dy) / (dx * dy),
            max_relative = 1e-12
        );
        assert_relative_eq!(m.perimeter_ratio(0), 1600.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Mesh::uniform(&[(0.0, 1.0)], &[0]).is_err());
        assert!(Mesh::uniform(&[(1.0, 1.0)], &[4]).is_err());
        assert!(Mesh::uniform(&[(0.0, f64::NAN)], &[4]).is_err());
        assert!(Mesh::uniform(&[(0.0, 1.0)], &[4, 4]).is_err());
        assert!(Mesh::uniform(&[(0.0, 1.0); 3], &[2, 2, 2]).is_err());
    }

    #[test]
    fn cell_faces_orientation() {
        let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 2.0)], &[3, 5]).unwrap();
        for c in 0..m.n_cells() {
            for (i, f, s) in m.cell_faces(c) {
                let (k, l) = m.face_cells(i, f);
                if s > 0.0 {
                    assert_eq!(k, c);
                } else {
                    assert_eq!(l, c);
                }
            }
        }
        let x = m.face_center(0, m.cell_index(&[0, 2]));
        assert_relative_eq!(x[0], 0.0);
        assert_relative_eq!(x[1], 2.5 * 0.4);
    }

    proptest! {
        #[test]
        fn volume_identities(nx in 2usize..64, ny in 2usize..64, lx in 0.1f64..10.0, ly in 0.1f64..10.0, x0 in -5.0f64..5.0) {
            let m = Mesh::uniform(&[(x0, x0 + lx), (0.0, ly)], &[nx, ny]).unwrap();
            let omega = lx * ly;
            let cells: f64 = (0..m.n_cells()).map(|_| m.cell_volume()).sum();
            prop_assert!((cells - omega).abs() < 1e-12 * omega);
            for i in 0..2 {
                let duals: f64 = (0..m.n_faces(i)).map(|_| m.dual_volume(i)).sum();
                prop_assert!((duals - omega).abs() < 1e-12 * omega);
            }
        }

        #[test]
        fn adjacency_is_an_involution(nx in 2usize..40, ny in 2usize..40) {
            let m = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[nx, ny]).unwrap();
            for i in 0..2 {
                for c in 0..m.n_cells() {
                    prop_assert_eq!(m.prev(i, m.next(i, c)), c);
                    prop_assert_eq!(m.next(i, m.prev(i, c)), c);
                    // crossing the upper face of K lands in L, crossing back lands in K
                    let (k, l) = m.face_cells(i, m.next(i, c));
                    prop_assert_eq!(k, c);
                    prop_assert_eq!(m.prev(i, l), c);
                }
            }
        }
    }
}
