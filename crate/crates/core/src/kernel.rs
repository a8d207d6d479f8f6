//! Dipolar kernel and even powers of the Riesz transforms as Fourier
//! multipliers.
//!
//! The dipole axis is fixed to `x3`. With `\hat K(xi) = (4 pi/3)(2 xi3^2 -
//! xi1^2 - xi2^2)/|xi|^2` the kernel is a combination of the symbols
//! `xi_j^2/|xi|^2`. Riesz powers are exposed with **positive** symbols:
//! `riesz_pow(f, j, 2)` multiplies by `xi_j^2/|xi|^2`, which is `-R_j^2` for the
//! transform with symbol `-i xi_j/|xi|`; callers carry that sign. The fourth
//! power needs no sign (`(-1)^2`).
//!
//! All symbols are homogeneous of degree zero and undefined at `xi = 0`; the
//! zero mode is set to 0 everywhere, which makes `K * f` mean free.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::field::{weighted_sum, Representation, SpectralField};
use crate::grid::Grid3;

pub const KHAT_MIN: f64 = -4.0 * PI / 3.0;
pub const KHAT_MAX: f64 = 8.0 * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::X3];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }

    /// 1-based axis number as used in configs (`1`, `2`, `3`).
    pub fn from_number(j: usize) -> Result<Self> {
        match j {
            1 => Ok(Axis::X1),
            2 => Ok(Axis::X2),
            3 => Ok(Axis::X3),
            _ => Err(GpeError::InvalidArgument(format!("axis must be 1, 2 or 3, got {j}"))),
        }
    }
}

/// A zero-degree Fourier multiplier available from a [`KernelTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol {
    /// `\hat K`.
    Dipolar,
    /// `xi_j^2 / |xi|^2`.
    Riesz2(Axis),
    /// `xi_j^4 / |xi|^4`.
    Riesz4(Axis),
    /// `xi_k^2 xi_h^2 / |xi|^4`.
    Mixed(Axis, Axis),
    /// `xi3 d/dxi3 \hat K`.
    DipolarDerivative3,
}

/// Symbol arrays sampled on the frequency grid (storage order).
#[derive(Debug, Clone)]
pub struct KernelTable {
    grid: Arc<Grid3>,
    pub khat: Vec<f64>,
    pub riesz2: [Vec<f64>; 3],
    pub riesz4_3: Vec<f64>,
    pub dkhat3: Vec<f64>,
}

impl KernelTable {
    pub fn build(grid: Arc<Grid3>) -> Self {
        let xi = grid.wavevectors();
        let n = xi.len();
        let mut khat = vec![0.0; n];
        let mut riesz2 = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut riesz4_3 = vec![0.0; n];
        let mut dkhat3 = vec![0.0; n];
        for (i, [a, b, c]) in xi.into_iter().enumerate() {
            let (a2, b2, c2) = (a * a, b * b, c * c);
            let s = a2 + b2 + c2;
            if s == 0.0 {
                continue;
            }
            riesz2[0][i] = a2 / s;
            riesz2[1][i] = b2 / s;
            riesz2[2][i] = c2 / s;
            riesz4_3[i] = (c2 * c2) / (s * s);
            khat[i] = (4.0 * PI / 3.0) * (2.0 * c2 - b2 - a2) / s;
            // xi3 d/dxi3 of khat, differentiated in closed form
            dkhat3[i] = 8.0 * PI * c2 * (a2 + b2) / (s * s);
        }
        Self {
            grid,
            khat,
            riesz2,
            riesz4_3,
            dkhat3,
        }
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    /// The same table on an isotropically rescaled copy of the grid. The
    /// symbols are 0-homogeneous, so the arrays carry over unchanged.
    pub fn on_rescaled_grid(&self, grid: Arc<Grid3>) -> Result<Self> {
        let (a, b) = (self.grid.lengths(), grid.lengths());
        let ratio = b[0] / a[0];
        let isotropic = (0..3).all(|i| (b[i] / a[i] - ratio).abs() <= 1e-12 * ratio);
        if grid.n() != self.grid.n() || !isotropic {
            return Err(GpeError::GridMismatch);
        }
        Ok(Self {
            grid,
            ..self.clone()
        })
    }

    /// Symbol values for `sym` in storage order.
    pub fn symbol(&self, sym: Symbol) -> Vec<f64> {
        match sym {
            Symbol::Dipolar => self.khat.clone(),
            Symbol::Riesz2(j) => self.riesz2[j.index()].clone(),
            Symbol::Riesz4(Axis::X3) => self.riesz4_3.clone(),
            Symbol::Riesz4(j) => self.riesz2[j.index()].iter().map(|v| v * v).collect(),
            Symbol::Mixed(k, h) => self.riesz2[k.index()]
                .iter()
                .zip(&self.riesz2[h.index()])
                .map(|(a, b)| a * b)
                .collect(),
            Symbol::DipolarDerivative3 => self.dkhat3.clone(),
        }
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(GpeError::GridMismatch)
        }
    }

    /// Applies a real symbol and returns the physical result.
    pub fn apply(&self, f: &SpectralField, sym: Symbol) -> Result<SpectralField> {
        self.check_grid(f)?;
        Ok(apply_real(f, &self.symbol(sym)))
    }

    /// `K * f` for a physical field.
    pub fn convolve(&self, f: &SpectralField) -> Result<SpectralField> {
        f.expect_repr(Representation::Physical)?;
        self.check_grid(f)?;
        Ok(apply_real(f, &self.khat))
    }

    /// Multiplication by `(xi_j^2/|xi|^2)^{power/2}`, `power` in {2, 4}.
    pub fn riesz_pow(&self, f: &SpectralField, axis: Axis, power: u32) -> Result<SpectralField> {
        let sym = match power {
            2 => Symbol::Riesz2(axis),
            4 => Symbol::Riesz4(axis),
            _ => {
                return Err(GpeError::InvalidArgument(format!(
                    "Riesz power must be 2 or 4, got {power}"
                )))
            }
        };
        self.apply(f, sym)
    }

    /// `\int (T f) \bar g dx = (2 pi)^-3 \int m \hat f \bar{\hat g} d xi`,
    /// evaluated on the spectrum.
    pub fn pairing(&self, f: &SpectralField, g: &SpectralField, sym: Symbol) -> Result<Complex64> {
        self.check_grid(f)?;
        self.check_grid(g)?;
        let m = self.symbol(sym);
        Ok(spectral_pairing(&self.grid, &m, f, g))
    }

    /// Largest `|\hat K(2 xi) - \hat K(xi)|` over all nonzero modes whose
    /// double is still on the grid.
    pub fn check_homogeneity(&self) -> HomogeneityReport {
        let g = &self.grid;
        let n = g.n();
        let doubled = |axis: usize, j: usize| -> Option<usize> {
            let m = if j < n[axis] / 2 { j as i64 } else { j as i64 - n[axis] as i64 };
            let m2 = 2 * m;
            let half = (n[axis] / 2) as i64;
            if m2 >= -half && m2 < half {
                Some(m2.rem_euclid(n[axis] as i64) as usize)
            } else {
                None
            }
        };
        let mut max_dev = 0.0_f64;
        let mut pairs = 0usize;
        for idx in 1..g.len_total() {
            let [i1, i2, i3] = g.unravel(idx);
            let (Some(j1), Some(j2), Some(j3)) = (doubled(0, i1), doubled(1, i2), doubled(2, i3))
            else {
                continue;
            };
            let jdx = g.index(j1, j2, j3);
            max_dev = max_dev.max((self.khat[jdx] - self.khat[idx]).abs());
            pairs += 1;
        }
        HomogeneityReport {
            pairs_checked: pairs,
            max_deviation: max_dev,
        }
    }

    /// Largest violation of the table identities over nonzero modes:
    /// `(bounds, sum of Riesz squares, Riesz decomposition of \hat K,
    /// derivative decomposition)`.
    pub fn identity_residuals(&self) -> [f64; 4] {
        let mut out = [0.0_f64; 4];
        for i in 1..self.khat.len() {
            let r = [self.riesz2[0][i], self.riesz2[1][i], self.riesz2[2][i]];
            if r.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let k = self.khat[i];
            out[0] = out[0].max((KHAT_MIN - k).max(k - KHAT_MAX).max(0.0));
            out[1] = out[1].max((r[0] + r[1] + r[2] - 1.0).abs());
            out[2] = out[2].max((k - (4.0 * PI / 3.0) * (2.0 * r[2] - r[0] - r[1])).abs());
            out[3] = out[3].max((self.dkhat3[i] - 8.0 * PI * (r[2] - self.riesz4_3[i])).abs());
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HomogeneityReport {
    pub pairs_checked: usize,
    pub max_deviation: f64,
}

fn apply_real(f: &SpectralField, symbol: &[f64]) -> SpectralField {
    let mut hat = f.to_frequency();
    hat.values_mut()
        .par_iter_mut()
        .zip(symbol.par_iter())
        .for_each(|(v, s)| *v *= s);
    hat.inverse().expect("frequency input")
}

/// `(dV/N) sum m U_f conj(U_g)` with both fields taken to frequency space.
pub fn spectral_pairing(grid: &Grid3, m: &[f64], f: &SpectralField, g: &SpectralField) -> Complex64 {
    let fh = f.to_frequency();
    let gh = g.to_frequency();
    let prod: Vec<Complex64> = fh
        .values()
        .par_iter()
        .zip(gh.values().par_iter())
        .zip(m.par_iter())
        .map(|((a, b), s)| a * b.conj() * s)
        .collect();
    let re = weighted_sum(&prod, |_, v| v.re);
    let im = weighted_sum(&prod, |_, v| v.im);
    Complex64::new(re, im) * grid.spectral_weight()
}
