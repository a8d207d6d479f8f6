//! Complex scalar fields on a [`Grid3`], carried in physical or frequency
//! representation.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::grid::Grid3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Frequency,
}

/// Complex field sampled on a periodic grid.
///
/// In frequency representation `values` holds raw (unnormalized) DFT
/// coefficients; see the module docs of [`crate::grid`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<Grid3>,
    values: Vec<Complex64>,
    repr: Representation,
}

impl SpectralField {
    pub fn new(grid: Arc<Grid3>, values: Vec<Complex64>, repr: Representation) -> Result<Self> {
        if values.len() != grid.len_total() {
            return Err(GpeError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len_total(),
                values.len()
            )));
        }
        Ok(Self { grid, values, repr })
    }

    pub fn zeros(grid: Arc<Grid3>) -> Self {
        let values = vec![Complex64::default(); grid.len_total()];
        Self {
            grid,
            values,
            repr: Representation::Physical,
        }
    }

    /// Samples `f` at every node (physical representation).
    pub fn from_fn<F>(grid: Arc<Grid3>, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Complex64 + Sync,
    {
        let values = grid.positions().into_par_iter().map(&f).collect();
        Self {
            grid,
            values,
            repr: Representation::Physical,
        }
    }

    pub fn from_real_fn<F>(grid: Arc<Grid3>, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn repr(&self) -> Representation {
        self.repr
    }

    pub fn is_physical(&self) -> bool {
        self.repr == Representation::Physical
    }

    pub fn expect_repr(&self, expected: Representation) -> Result<()> {
        if self.repr == expected {
            Ok(())
        } else {
            Err(GpeError::Representation {
                expected,
                found: self.repr,
            })
        }
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(GpeError::GridMismatch)
        }
    }

    pub fn forward(&self) -> Result<Self> {
        self.expect_repr(Representation::Physical)?;
        let mut out = self.clone();
        out.grid.fft().forward(&mut out.values);
        out.repr = Representation::Frequency;
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.expect_repr(Representation::Frequency)?;
        let mut out = self.clone();
        out.grid.fft().inverse(&mut out.values);
        out.repr = Representation::Physical;
        Ok(out)
    }

    pub fn to_frequency(&self) -> Self {
        match self.repr {
            Representation::Frequency => self.clone(),
            Representation::Physical => self.forward().expect("physical input"),
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.repr {
            Representation::Physical => self.clone(),
            Representation::Frequency => self.inverse().expect("frequency input"),
        }
    }

    /// Multiplies the spectrum by `symbol` (storage order) and returns the
    /// physical result.
    pub fn apply_symbol(&self, symbol: &[Complex64]) -> Self {
        let mut hat = self.to_frequency();
        hat.values
            .par_iter_mut()
            .zip(symbol.par_iter())
            .for_each(|(v, s)| *v *= s);
        hat.inverse().expect("frequency input")
    }

    fn apply_real_symbol(&self, symbol: &[f64]) -> Self {
        let mut hat = self.to_frequency();
        hat.values
            .par_iter_mut()
            .zip(symbol.par_iter())
            .for_each(|(v, s)| *v *= s);
        hat.inverse().expect("frequency input")
    }

    /// Spectral gradient; components returned in physical representation.
    pub fn gradient(&self) -> [Self; 3] {
        let hat = self.to_frequency();
        let g = &self.grid;
        [0, 1, 2].map(|axis| {
            let k = g.derivative_wavenumbers(axis);
            let mut d = hat.clone();
            d.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
                let ka = k[g.unravel(idx)[axis]];
                *v *= Complex64::new(0.0, ka);
            });
            d.inverse().expect("frequency input")
        })
    }

    /// Spectral derivative along one axis (physical result).
    pub fn partial(&self, axis: usize) -> Self {
        let g = &self.grid;
        let k = g.derivative_wavenumbers(axis);
        let mut d = self.to_frequency();
        d.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            let ka = k[g.unravel(idx)[axis]];
            *v *= Complex64::new(0.0, ka);
        });
        d.inverse().expect("frequency input")
    }

    pub fn laplacian(&self) -> Self {
        let minus_k2: Vec<f64> = self.grid.k_squared().into_iter().map(|v| -v).collect();
        self.apply_real_symbol(&minus_k2)
    }

    /// Riemann sum `sum f dV`.
    pub fn integrate(&self) -> Result<Complex64> {
        self.expect_repr(Representation::Physical)?;
        Ok(chunked_sum_c(&self.values) * self.grid.dv())
    }

    /// `<f, g> = \int f \bar g dx` (linear in `f`, conjugate-linear in `g`).
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.expect_repr(Representation::Physical)?;
        other.expect_repr(Representation::Physical)?;
        self.same_grid(other)?;
        let prod: Vec<Complex64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .collect();
        Ok(chunked_sum_c(&prod) * self.grid.dv())
    }

    /// `\int |f|^2 dx` for a physical field.
    pub fn mass(&self) -> Result<f64> {
        self.expect_repr(Representation::Physical)?;
        Ok(weighted_sum(&self.values, |_, v| v.norm_sqr()) * self.grid.dv())
    }

    pub fn norm_l2(&self) -> Result<f64> {
        Ok(self.mass()?.sqrt())
    }

    /// `\int |grad f|^2 dx` via the spectrum (either representation).
    pub fn kinetic(&self) -> f64 {
        let hat = self.to_frequency();
        let k2 = self.grid.k_squared();
        weighted_sum(&hat.values, |i, v| k2[i] * v.norm_sqr()) * self.grid.spectral_weight()
    }

    /// `|f|^2` as a physical field.
    pub fn density(&self) -> Result<Self> {
        self.expect_repr(Representation::Physical)?;
        Ok(self.map(|_, v| Complex64::new(v.norm_sqr(), 0.0)))
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(usize, Complex64) -> Complex64 + Sync,
    {
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(i, v)| f(i, *v))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
            repr: self.repr,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|_, v| v * c)
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        self.map(|_, v| v * c)
    }

    /// `self + c * other` (same representation required).
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        other.expect_repr(self.repr)?;
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a + b * c)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            repr: self.repr,
        })
    }

    pub fn mul_pointwise(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        self.expect_repr(Representation::Physical)?;
        other.expect_repr(Representation::Physical)?;
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            repr: self.repr,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `max |f - g| / max |g|`.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let num = self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        num / other.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Periodic translation by a whole number of cells per axis.
    pub fn roll(&self, shift: [isize; 3]) -> Result<Self> {
        self.expect_repr(Representation::Physical)?;
        let g = &self.grid;
        let n = g.n();
        let mut values = vec![Complex64::default(); g.len_total()];
        for (idx, v) in self.values.iter().enumerate() {
            let i = g.unravel(idx);
            let j = [0, 1, 2].map(|a| (i[a] as isize + shift[a]).rem_euclid(n[a] as isize) as usize);
            values[g.index(j[0], j[1], j[2])] = *v;
        }
        Self::new(g.clone(), values, Representation::Physical)
    }
}

const CHUNK: usize = 4096;

/// Deterministic reduction: fixed-size chunks summed in parallel, partial sums
/// combined sequentially, so results do not depend on the thread count.
pub(crate) fn weighted_sum<F>(values: &[Complex64], f: F) -> f64
where
    F: Fn(usize, &Complex64) -> f64 + Sync,
{
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            chunk
                .iter()
                .enumerate()
                .map(|(i, v)| f(c * CHUNK + i, v))
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

pub(crate) fn chunked_sum_c(values: &[Complex64]) -> Complex64 {
    let partial: Vec<Complex64> = values
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().sum::<Complex64>())
        .collect();
    partial.iter().sum()
}

/// Deterministic sum over indices `0..n`.
pub(crate) fn index_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum::<f64>())
        .collect();
    partial.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64) -> Arc<Grid3> {
        Arc::new(Grid3::cube(n, l).unwrap())
    }

    #[test]
    fn constant_goes_to_zero_mode() {
        let g = grid(8, 2.0 * PI);
        let f = SpectralField::from_real_fn(g.clone(), |_| 1.0);
        let hat = f.forward().unwrap();
        assert!((hat.values()[0].re - 512.0).abs() < 1e-12);
        assert!(hat.values()[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn plane_wave_single_bin() {
        let g = grid(8, 2.0 * PI);
        let f = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, 2.0 * x[0] - x[2]));
        let hat = f.forward().unwrap();
        let nonzero: Vec<usize> = (0..g.len_total())
            .filter(|&i| hat.values()[i].norm() > 1e-9)
            .collect();
        assert_eq!(nonzero, vec![g.index(2, 0, 7)]);
    }

    #[test]
    fn wrong_representation_is_rejected() {
        let g = grid(8, 1.0);
        let f = SpectralField::zeros(g);
        assert!(f.inverse().is_err());
        let hat = f.forward().unwrap();
        assert!(hat.forward().is_err());
        assert!(hat.integrate().is_err());
    }

    #[test]
    fn gradient_of_plane_wave() {
        let g = grid(8, 2.0 * PI);
        let f = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, x[0]));
        let [d1, d2, d3] = f.gradient();
        let expect = f.scale_complex(Complex64::i());
        assert!(d1.rel_diff(&expect) < 1e-12);
        assert!(d2.max_abs() < 1e-12 && d3.max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        let g = grid(8, 2.0 * PI);
        let c = SpectralField::from_real_fn(g.clone(), |_| 3.0);
        assert!(c.laplacian().max_abs() < 1e-12);
        let f = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, x[0] + x[1]));
        assert!(f.laplacian().rel_diff(&f.scale(-2.0)) < 1e-12);
    }

    #[test]
    fn integrate_constant_and_gaussian() {
        let g = grid(64, 16.0);
        let one = SpectralField::from_real_fn(g.clone(), |_| 1.0);
        assert!((one.integrate().unwrap().re - 4096.0).abs() < 1e-9);
        let norm = PI.powf(-0.75);
        let gauss = SpectralField::from_real_fn(g, |x| {
            norm * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp()
        });
        assert!((gauss.mass().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inner_is_hermitian_positive() {
        let g = grid(8, 3.0);
        let f = SpectralField::from_fn(g.clone(), |x| Complex64::new(x[0].sin(), x[1] * x[2]));
        let h = SpectralField::from_fn(g, |x| Complex64::new(x[2], x[0].cos()));
        let ff = f.inner(&f).unwrap();
        assert!(ff.re > 0.0 && ff.im.abs() < 1e-12);
        let fh = f.inner(&h).unwrap();
        let hf = h.inner(&f).unwrap();
        assert!((fh - hf.conj()).norm() < 1e-12);
        let ih = h.scale_complex(Complex64::i());
        assert!((f.inner(&ih).unwrap() - fh * Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn kinetic_two_routes() {
        let g = grid(32, 10.0);
        let f = SpectralField::from_fn(g, |x| {
            let r2 = x[0] * x[0] + 2.0 * x[1] * x[1] + 0.5 * x[2] * x[2];
            Complex64::from_polar((-r2).exp(), 0.3 * x[0])
        });
        let grad = f.gradient();
        let phys: f64 = grad.iter().map(|d| d.mass().unwrap()).sum();
        let spectral = f.kinetic();
        assert!((phys - spectral).abs() <= 1e-10 * spectral);
    }

    #[test]
    fn roll_translates() {
        let g = grid(8, 8.0);
        let f = SpectralField::from_real_fn(g.clone(), |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let r = f.roll([1, 0, 0]).unwrap();
        assert_eq!(r.values()[g.index(1, 0, 0)], f.values()[g.index(0, 0, 0)]);
        assert_eq!(r.values()[g.index(0, 0, 0)], f.values()[g.index(7, 0, 0)]);
    }
}
