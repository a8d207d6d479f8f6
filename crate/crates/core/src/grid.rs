//! Periodic box standing in for R^3, and the 3D FFT used by every spectral
//! operation in the crate.
//!
//! Storage is row-major with x3 fastest: `idx = (i1 * n2 + i2) * n3 + i3`.
//! Node `j` on axis `a` sits at `x = -L_a/2 + j * dx_a`, and wavenumbers follow
//! the signed FFT order `k[j] = 2 pi m / L_a` with `m = j` for `j < n/2` and
//! `m = j - n` otherwise (the Nyquist mode is `-n/2`).
//!
//! Transform normalization: the forward transform is the raw DFT
//! `U_k = sum_j u_j e^{-i k x_j}` (no prefactor) and the inverse carries `1/N`.
//! The continuous transform is approximated by `dV * U_k` (up to the phase of
//! the box offset), so every frequency-space quadrature
//! `(2 pi)^-3 \int F(xi) \hat f \bar{\hat g} d xi` becomes
//! `(dV / N) sum_k F(k) U_f \bar U_g`; see [`Grid3::spectral_weight`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{GpeError, Result};

pub const MIN_NODES: usize = 8;

/// Uniform periodic grid on `[-L1/2, L1/2) x [-L2/2, L2/2) x [-L3/2, L3/2)`.
#[derive(Clone)]
pub struct Grid3 {
    n: [usize; 3],
    len: [f64; 3],
    k: [Vec<f64>; 3],
    fft: Arc<Fft3>,
}

impl fmt::Debug for Grid3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid3")
            .field("n", &self.n)
            .field("len", &self.len)
            .finish()
    }
}

impl PartialEq for Grid3 {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.len == other.len
    }
}

impl Grid3 {
    pub fn new(n: [usize; 3], len: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] < MIN_NODES || n[a] % 2 != 0 {
                return Err(GpeError::InvalidGrid(format!(
                    "n{} must be even >= {MIN_NODES}, got {}",
                    a + 1,
                    n[a]
                )));
            }
            if !(len[a].is_finite() && len[a] > 0.0) {
                return Err(GpeError::InvalidGrid(format!(
                    "L{} must be a positive length, got {}",
                    a + 1,
                    len[a]
                )));
            }
        }
        let k = [0, 1, 2].map(|a| wavenumbers(n[a], len[a]));
        Ok(Self {
            n,
            len,
            k,
            fft: Arc::new(Fft3::new(n)),
        })
    }

    /// Cubic convenience constructor.
    pub fn cube(n: usize, len: f64) -> Result<Self> {
        Self::new([n; 3], [len; 3])
    }

    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.len
    }

    pub fn len_total(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.len[axis] / self.n[axis] as f64
    }

    /// Cell volume.
    pub fn dv(&self) -> f64 {
        self.dx(0) * self.dx(1) * self.dx(2)
    }

    pub fn volume(&self) -> f64 {
        self.len[0] * self.len[1] * self.len[2]
    }

    /// Frequency cell volume `(2 pi)^3 / V`.
    pub fn dv_xi(&self) -> f64 {
        (2.0 * PI).powi(3) / self.volume()
    }

    /// Factor turning `sum_k F(k) U_f conj(U_g)` of raw DFT coefficients into
    /// `(2 pi)^-3 \int F \hat f \bar{\hat g} d xi`.
    pub fn spectral_weight(&self) -> f64 {
        self.dv() / self.len_total() as f64
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    /// Largest representable |k| along an axis (the Nyquist magnitude).
    pub fn k_nyquist(&self, axis: usize) -> f64 {
        PI * self.n[axis] as f64 / self.len[axis]
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let dx = self.dx(axis);
        let half = 0.5 * self.len[axis];
        (0..self.n[axis]).map(|j| -half + j as f64 * dx).collect()
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.n[1] + i2) * self.n[2] + i3
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i3 = idx % self.n[2];
        let r = idx / self.n[2];
        [r / self.n[1], r % self.n[1], i3]
    }

    /// Physical coordinates of every node, in storage order.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        let [c1, c2, c3] = [self.coords(0), self.coords(1), self.coords(2)];
        let mut out = Vec::with_capacity(self.len_total());
        for &x1 in &c1 {
            for &x2 in &c2 {
                for &x3 in &c3 {
                    out.push([x1, x2, x3]);
                }
            }
        }
        out
    }

    /// Wavevector of every mode, in storage order.
    pub fn wavevectors(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len_total());
        for &k1 in &self.k[0] {
            for &k2 in &self.k[1] {
                for &k3 in &self.k[2] {
                    out.push([k1, k2, k3]);
                }
            }
        }
        out
    }

    /// Symbol of `-Delta` per mode, in storage order, built from the
    /// derivative wavenumbers (Nyquist entries zeroed) so that `-Delta` and
    /// `-div grad` coincide on the grid.
    pub fn k_squared(&self) -> Vec<f64> {
        let kd = [0, 1, 2].map(|a| self.derivative_wavenumbers(a));
        let mut out = Vec::with_capacity(self.len_total());
        for &k1 in &kd[0] {
            for &k2 in &kd[1] {
                for &k3 in &kd[2] {
                    out.push(k1 * k1 + k2 * k2 + k3 * k3);
                }
            }
        }
        out
    }

    /// `true` for modes with a Nyquist index on some axis. These carry no
    /// kinetic energy under the derivative convention above.
    pub fn nyquist_mask(&self) -> Vec<bool> {
        let h = self.n.map(|n| n / 2);
        let mut out = Vec::with_capacity(self.len_total());
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                for k in 0..self.n[2] {
                    out.push(i == h[0] || j == h[1] || k == h[2]);
                }
            }
        }
        out
    }

    /// Wavenumbers used for differentiation: the Nyquist entry is zeroed so
    /// real fields have real derivatives.
    pub fn derivative_wavenumbers(&self, axis: usize) -> Vec<f64> {
        let mut k = self.k[axis].clone();
        k[self.n[axis] / 2] = 0.0;
        k
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }
}

fn wavenumbers(n: usize, len: f64) -> Vec<f64> {
    let base = 2.0 * PI / len;
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            base * m as f64
        })
        .collect()
}

/// Planned 3D complex FFT over the storage layout of [`Grid3`].
pub struct Fft3 {
    n: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(n: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = n.map(|m| planner.plan_fft_forward(m));
        let inverse = n.map(|m| planner.plan_fft_inverse(m));
        Self {
            n,
            forward,
            inverse,
        }
    }

    /// In-place unnormalized forward DFT.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// In-place inverse DFT including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n1, n2, n3] = self.n;
        assert_eq!(data.len(), n1 * n2 * n3, "buffer does not match the grid");
        let mut tmp = vec![Complex64::default(); data.len()];

        // x3: contiguous lines.
        lines(data, &plans[2]);

        // x2: transpose each x1-plane so x2 becomes contiguous.
        data.par_chunks_mut(n2 * n3)
            .zip(tmp.par_chunks_mut(n2 * n3))
            .for_each(|(plane, scratch)| {
                transpose(plane, scratch, n2, n3);
                let mut fft_scratch =
                    vec![Complex64::default(); plans[1].get_inplace_scratch_len()];
                plans[1].process_with_scratch(scratch, &mut fft_scratch);
                transpose(scratch, plane, n3, n2);
            });

        // x1: transpose the n1 x (n2 n3) matrix.
        transpose_par(data, &mut tmp, n1, n2 * n3);
        lines(&mut tmp, &plans[0]);
        transpose_par(&tmp, data, n2 * n3, n1);
    }
}

fn lines(data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
    let len = plan.len();
    let lines_per_task = (4096 / len).max(1);
    data.par_chunks_mut(len * lines_per_task).for_each(|chunk| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(chunk, &mut scratch);
    });
}

/// `dst[c * rows + r] = src[r * cols + c]`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn transpose_par(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, v) in out.iter_mut().enumerate() {
            *v = src[r * cols + c];
        }
    });
}
