//! Linear solvers for the implicit stages: restarted GMRES and preconditioned
//! conjugate gradients, both driven by an FFT-diagonalised constant-coefficient
//! operator on the periodic grid.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Solves `S(k) x_hat = r_hat` for a translation-invariant periodic operator with symbol `S`.
pub struct PeriodicFft {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    col: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl PeriodicFft {
    /// `counts` has one or two entries, first axis fastest.
    pub fn new(counts: &[usize]) -> Self {
        let nx = counts[0];
        let ny = counts.get(1).copied().unwrap_or(1);
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let inv_x = planner.plan_fft_inverse(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let scratch_len = [&fwd_x, &inv_x, &fwd_y, &inv_y]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            nx,
            ny,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            buf: vec![Complex64::default(); nx * ny],
            col: vec![Complex64::default(); ny],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wave angles `(theta_x, theta_y)` of the Fourier mode stored at `k`.
    pub fn angles(&self, k: usize) -> (f64, f64) {
        let tau = std::f64::consts::TAU;
        let (kx, ky) = (k % self.nx, k / self.nx);
        (tau * kx as f64 / self.nx as f64, tau * ky as f64 / self.ny as f64)
    }

    fn transform(&mut self, forward: bool) {
        let (px, py) = if forward {
            (self.fwd_x.clone(), self.fwd_y.clone())
        } else {
            (self.inv_x.clone(), self.inv_y.clone())
        };
        px.process_with_scratch(&mut self.buf, &mut self.scratch);
        if self.ny > 1 {
            for ix in 0..self.nx {
                for iy in 0..self.ny {
                    self.col[iy] = self.buf[ix + self.nx * iy];
                }
                py.process_with_scratch(&mut self.col, &mut self.scratch);
                for iy in 0..self.ny {
                    self.buf[ix + self.nx * iy] = self.col[iy];
                }
            }
        }
    }

    /// `out = F^{-1}[ F[rhs] / symbol ]`; modes where the symbol is zero are dropped.
    pub fn solve(&mut self, symbol: &[Complex64], rhs: &[f64], out: &mut [f64]) {
        for (b, &r) in self.buf.iter_mut().zip(rhs) {
            *b = Complex64::new(r, 0.0);
        }
        self.transform(true);
        for (b, s) in self.buf.iter_mut().zip(symbol) {
            *b = if s.norm_sqr() > 0.0 { *b / s } else { Complex64::default() };
        }
        self.transform(false);
        let scale = 1.0 / self.len() as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re * scale;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveInfo {
    pub iterations: usize,
    /// Final residual relative to `|b|`.
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x`.
///
/// Stops once `|b - A x| <= rtol |b|`. Returns an error if `max_iter` inner
/// iterations do not reach the tolerance.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<SolveInfo> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveInfo { iterations: 0, relative_residual: 0.0 });
    }
    let m = restart.max(1);
    let mut basis: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
    let mut zs: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut h = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut w = vec![0.0; n];
    let mut total = 0;

    loop {
        apply(x, &mut w);
        for (r, (bi, wi)) in basis[0].iter_mut().zip(b.iter().zip(&w)) {
            *r = bi - wi;
        }
        let beta = norm(&basis[0]);
        let mut rel = beta / bnorm;
        if rel <= rtol {
            return Ok(SolveInfo { iterations: total, relative_residual: rel });
        }
        if total >= max_iter {
            return Err(Error::LinearSolver { iterations: total, residual: rel });
        }
        basis[0].iter_mut().for_each(|v| *v /= beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut k = 0;
        while k < m && total < max_iter {
            precond(&basis[k], &mut zs[k]);
            apply(&zs[k], &mut w);
            // modified Gram-Schmidt, twice for robustness
            for _ in 0..2 {
                for j in 0..=k {
                    let hj = dot(&w, &basis[j]);
                    h[j][k] += hj;
                    for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                        *wi -= hj * vi;
                    }
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            if hn > 0.0 {
                for (v, wi) in basis[k + 1].iter_mut().zip(&w) {
                    *v = wi / hn;
                }
            }
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let r = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / r;
            sn[k] = h[k + 1][k] / r;
            h[k][k] = r;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            rel = g[k].abs() / bnorm;
            if rel <= rtol || hn == 0.0 {
                break;
            }
        }

        // back substitution and update x += Z y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&zs[j]) {
                *xi += yj * zi;
            }
        }
        for row in h.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive semi-definite
/// operator whose null space is the constants. Iterates are kept at zero mean.
pub fn pcg_zero_mean(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<SolveInfo> {
    let n = b.len();
    let project = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|e| *e -= mean);
    };
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm(&rhs);
    project(x);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveInfo { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..=max_iter {
        let rel = norm(&r) / bnorm;
        if rel <= rtol {
            return Ok(SolveInfo { iterations: it, relative_residual: rel });
        }
        if it == max_iter {
            return Err(Error::LinearSolver { iterations: it, residual: rel });
        }
        apply(&p, &mut ax);
        let alpha = rz / dot(&p, &ax);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}
