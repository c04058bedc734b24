//! Direct solver for `(M + c K) x = b` on the cone grid.
//!
//! The periodic direction is diagonalized by a real orthonormal Fourier
//! basis; every Fourier mode then leaves one symmetric positive-definite
//! tridiagonal system in `s`, factored once per value of `c`.

use std::f64::consts::PI;

use crate::grid::ConeGrid;

/// Real orthonormal eigenbasis of the periodic second difference.
#[derive(Debug, Clone)]
pub struct ThetaModes {
    n: usize,
    /// Row-major `n x n`: `basis[j * n + k]` is mode `k` at column `j`.
    basis: Vec<f64>,
    /// Eigenvalue of `circ(2,-1,...,-1) / htheta` for each mode.
    eigen: Vec<f64>,
}

impl ThetaModes {
    pub fn new(n: usize) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut freqs = Vec::with_capacity(n);
        let mut kinds = Vec::with_capacity(n);
        freqs.push(0);
        kinds.push(0u8);
        for m in 1..=(n - 1) / 2 {
            freqs.push(m);
            kinds.push(1);
            freqs.push(m);
            kinds.push(2);
        }
        if n.is_multiple_of(2) {
            freqs.push(n / 2);
            kinds.push(3);
        }
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let sqrt_2_n = (2.0 / n as f64).sqrt();
        let mut basis = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let m = freqs[k];
                // reduce the phase before evaluating the trig functions
                let phase = 2.0 * PI * ((m * j) % n) as f64 / n as f64;
                basis[j * n + k] = match kinds[k] {
                    0 => inv_sqrt_n,
                    1 => sqrt_2_n * phase.cos(),
                    2 => sqrt_2_n * phase.sin(),
                    _ => {
                        if j % 2 == 0 {
                            inv_sqrt_n
                        } else {
                            -inv_sqrt_n
                        }
                    }
                };
            }
        }
        let eigen = freqs.iter().map(|&m| 4.0 * (PI * m as f64 / n as f64).sin().powi(2) / h).collect();
        ThetaModes { n, basis, eigen }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen
    }

    /// `out[k] = sum_j row[j] * basis[j][k]`
    fn forward(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &x) in row.iter().enumerate() {
            let b = &self.basis[j * self.n..(j + 1) * self.n];
            for (o, bk) in out.iter_mut().zip(b) {
                *o += x * bk;
            }
        }
    }

    /// `out[j] = sum_k coef[k] * basis[j][k]`
    fn backward(&self, coef: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let b = &self.basis[j * self.n..(j + 1) * self.n];
            *o = b.iter().zip(coef).fold(0.0, |acc, (bk, c)| acc + bk * c);
        }
    }
}

/// LDL^T factors of one tridiagonal mode system.
#[derive(Debug, Clone)]
struct TridiagFactor {
    pivots: Vec<f64>,
    /// `lower[r]` multiplies row `r - 1`; `lower[0]` is unused.
    lower: Vec<f64>,
}

impl TridiagFactor {
    fn new(diag: &[f64], off: &[f64]) -> Option<Self> {
        let n = diag.len();
        let mut pivots = vec![0.0; n];
        let mut lower = vec![0.0; n];
        pivots[0] = diag[0];
        for r in 1..n {
            if !(pivots[r - 1] > 0.0) {
                return None;
            }
            lower[r] = off[r - 1] / pivots[r - 1];
            pivots[r] = diag[r] - lower[r] * off[r - 1];
        }
        if !(pivots[n - 1] > 0.0) {
            return None;
        }
        Some(TridiagFactor { pivots, lower })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for r in 1..n {
            x[r] -= self.lower[r] * x[r - 1];
        }
        x[n - 1] /= self.pivots[n - 1];
        for r in (0..n - 1).rev() {
            x[r] = x[r] / self.pivots[r] - self.lower[r + 1] * x[r + 1];
        }
    }
}

/// Factored `M + c K` for one grid and one `c`.
#[derive(Debug, Clone)]
pub struct ModalSolver {
    rows: usize,
    ntheta: usize,
    coupling: f64,
    modes: ThetaModes,
    factors: Vec<TridiagFactor>,
}

impl ModalSolver {
    /// Factor `M + coupling * K`. Returns `None` if a pivot is not positive.
    pub fn new(grid: &ConeGrid, coupling: f64) -> Option<Self> {
        let modes = ThetaModes::new(grid.ntheta());
        Self::with_modes(grid, coupling, modes)
    }

    pub fn with_modes(grid: &ConeGrid, coupling: f64, modes: ThetaModes) -> Option<Self> {
        let rows = grid.active_rows();
        let first = grid.first_active_row();
        let ht = grid.htheta();
        let hs = grid.hs();
        let weights: Vec<f64> = (0..rows).map(|r| grid.s_weight(r + first)).collect();
        // 1D stiffness in s (unit conductance per edge, scaled by 1/hs)
        let mut ks_diag = vec![0.0; rows];
        for (r, d) in ks_diag.iter_mut().enumerate() {
            let i = r + first;
            let mut links = 0.0;
            if i > 0 {
                links += 1.0;
            }
            if i + 1 < grid.ns() {
                links += 1.0;
            }
            *d = links / hs;
        }
        let ks_off = -1.0 / hs;

        let mut factors = Vec::with_capacity(grid.ntheta());
        for &lam in modes.eigenvalues() {
            let diag: Vec<f64> =
                (0..rows).map(|r| ht * weights[r] + coupling * (ht * ks_diag[r] + lam * weights[r])).collect();
            let off = vec![coupling * ht * ks_off; rows - 1];
            factors.push(TridiagFactor::new(&diag, &off)?);
        }
        Some(ModalSolver { rows, ntheta: grid.ntheta(), coupling, modes, factors })
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn modes(&self) -> &ThetaModes {
        &self.modes
    }

    /// Solve `(M + c K) x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (rows, nt) = (self.rows, self.ntheta);
        let mut hat = vec![0.0; rows * nt];
        for r in 0..rows {
            self.modes.forward(&rhs[r * nt..(r + 1) * nt], &mut hat[r * nt..(r + 1) * nt]);
        }
        let mut column = vec![0.0; rows];
        for (k, factor) in self.factors.iter().enumerate() {
            for r in 0..rows {
                column[r] = hat[r * nt + k];
            }
            factor.solve_in_place(&mut column);
            for r in 0..rows {
                hat[r * nt + k] = column[r];
            }
        }
        let mut out = vec![0.0; rows * nt];
        for r in 0..rows {
            self.modes.backward(&hat[r * nt..(r + 1) * nt], &mut out[r * nt..(r + 1) * nt]);
        }
        out
    }
}
