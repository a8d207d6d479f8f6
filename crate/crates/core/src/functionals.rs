//! Scalar functionals of a field: mass, kinetic and potential energy, the
//! Pohozaev functional `G`, the Weinstein quotient, and the `L^2`-preserving
//! dilation `u^mu(x) = mu^{3/2} u(mu x)`.
//!
//! Conventions: `T = \int |grad u|^2`, `P = lambda1 \int |u|^4 + lambda2 \int
//! (K * |u|^2)|u|^2`, `E = (T + P)/2`, `G = T + 3P/2`, so that `E - G/3 = T/6`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::field::{index_sum, weighted_sum, Representation, SpectralField};
use crate::grid::Grid3;
use crate::kernel::KernelTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl CouplingParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1.is_finite() && lambda2.is_finite()) {
            return Err(GpeError::InvalidArgument(format!(
                "couplings must be finite, got ({lambda1}, {lambda2})"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }

    /// Extreme values of `lambda1 + lambda2 \hat K` over directions.
    pub fn symbol_range(&self) -> (f64, f64) {
        let a = self.lambda1 - 4.0 * PI / 3.0 * self.lambda2;
        let b = self.lambda1 + 8.0 * PI / 3.0 * self.lambda2;
        (a.min(b), a.max(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Unstable,
    Stable,
}

/// Unstable iff `lambda1 + lambda2 \hat K(xi)` is negative in some direction.
/// At `lambda2 = 0` this reduces to `lambda1 < 0`.
pub fn classify_regime(p: CouplingParams) -> Regime {
    if p.symbol_range().0 < 0.0 {
        Regime::Unstable
    } else {
        Regime::Stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FunctionalReport {
    pub mass: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub g: f64,
    /// `\int |u|^4`.
    pub l4norm4: f64,
    /// `\int (K * |u|^2) |u|^2`.
    pub dipolar: f64,
    /// `||u||^2` in homogeneous `H^1`; equal to `kinetic`.
    pub h1dot: f64,
}

impl FunctionalReport {
    fn assemble(p: CouplingParams, mass: f64, kinetic: f64, l4norm4: f64, dipolar: f64) -> Self {
        let potential = p.lambda1 * l4norm4 + p.lambda2 * dipolar;
        Self {
            mass,
            energy: 0.5 * (kinetic + potential),
            kinetic,
            potential,
            g: kinetic + 1.5 * potential,
            l4norm4,
            dipolar,
            h1dot: kinetic,
        }
    }

    /// `E(u^mu)` in closed form.
    pub fn energy_scaled(&self, mu: f64) -> f64 {
        0.5 * (mu * mu * self.kinetic + mu.powi(3) * self.potential)
    }

    /// `G(u^mu)` in closed form.
    pub fn g_scaled(&self, mu: f64) -> f64 {
        mu * mu * self.kinetic + 1.5 * mu.powi(3) * self.potential
    }

    /// Weinstein quotient `T^{3/2} M^{1/2} / (-P)`.
    pub fn weinstein(&self) -> Result<f64> {
        if -self.potential <= 0.0 {
            return Err(GpeError::NonAdmissible(format!(
                "potential energy {} is not negative",
                self.potential
            )));
        }
        Ok(self.kinetic.powf(1.5) * self.mass.sqrt() / -self.potential)
    }
}

/// Pointwise mean field `lambda1 |u|^2 + lambda2 K * |u|^2`, together with
/// the density `|u|^2`.
pub fn mean_field(u: &SpectralField, p: CouplingParams, kt: &KernelTable) -> Result<(Vec<f64>, Vec<f64>)> {
    u.expect_repr(Representation::Physical)?;
    let rho: Vec<f64> = u.values().par_iter().map(|v| v.norm_sqr()).collect();
    if p.lambda2 == 0.0 {
        let n = rho.par_iter().map(|r| p.lambda1 * r).collect();
        return Ok((n, rho));
    }
    let krho = kt.convolve(&real_field(u.grid().clone(), &rho))?;
    let n = rho
        .par_iter()
        .zip(krho.values().par_iter())
        .map(|(r, k)| p.lambda1 * r + p.lambda2 * k.re)
        .collect();
    Ok((n, rho))
}

pub(crate) fn real_field(grid: Arc<Grid3>, values: &[f64]) -> SpectralField {
    let v = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    SpectralField::new(grid, v, Representation::Physical).expect("length matches grid")
}

/// Evaluates every functional of `u` (physical representation). The
/// potential is integrated in physical space.
pub fn evaluate(u: &SpectralField, p: CouplingParams, kt: &KernelTable) -> Result<FunctionalReport> {
    u.expect_repr(Representation::Physical)?;
    let g = u.grid();
    let dv = g.dv();
    let mass = u.mass()?;
    let kinetic = u.kinetic();
    let rho: Vec<f64> = u.values().par_iter().map(|v| v.norm_sqr()).collect();
    let l4norm4 = index_sum(rho.len(), |i| rho[i] * rho[i]) * dv;
    let krho = kt.convolve(&real_field(g.clone(), &rho))?;
    let dipolar = weighted_sum(krho.values(), |i, v| v.re * rho[i]) * dv;
    Ok(FunctionalReport::assemble(p, mass, kinetic, l4norm4, dipolar))
}

/// `P` through the spectrum: `(2 pi)^-3 \int (lambda1 + lambda2 \hat K)
/// |\hat{|u|^2}|^2 d xi`.
pub fn potential_spectral(u: &SpectralField, p: CouplingParams, kt: &KernelTable) -> Result<f64> {
    u.expect_repr(Representation::Physical)?;
    let rho = u.density()?.to_frequency();
    let w = u.grid().spectral_weight();
    let khat = &kt.khat;
    // The zero mode carries lambda1 only: \hat K is set to 0 there.
    Ok(weighted_sum(rho.values(), |i, v| (p.lambda1 + p.lambda2 * khat[i]) * v.norm_sqr()) * w)
}

/// Weinstein quotient of `u`; errors when the potential energy is not
/// negative.
pub fn weinstein(u: &SpectralField, p: CouplingParams, kt: &KernelTable) -> Result<f64> {
    evaluate(u, p, kt)?.weinstein()
}

/// Relative mass change tolerated by [`scale_mu`].
pub const SCALE_MASS_GATE: f64 = 1e-8;

/// `u^mu(x) = mu^{3/2} u(mu x)` by separable band-limited trigonometric
/// interpolation. Points with `mu x` outside the box read zero, so `u` must
/// be localized; the result is rejected if its mass differs from `M(u)` by
/// more than [`SCALE_MASS_GATE`] relative.
pub fn scale_mu(u: &SpectralField, mu: f64) -> Result<SpectralField> {
    let out = dilate(u, [mu; 3])?.scale(mu.powf(1.5));
    let m0 = u.mass()?;
    let m1 = out.mass()?;
    if (m1 - m0).abs() > SCALE_MASS_GATE * m0.max(f64::MIN_POSITIVE) {
        return Err(GpeError::Numerical(format!(
            "dilation by {mu} changed the mass from {m0} to {m1}; field not localized or under-resolved"
        )));
    }
    Ok(out)
}

/// `amplitude * u(mu x)` realized exactly: the node values of `u` times
/// `amplitude`, placed on the grid with lengths `L / mu`.
pub fn dilate_onto_grid(u: &SpectralField, mu: f64, amplitude: f64) -> Result<SpectralField> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(GpeError::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let g = u.grid();
    let grid = Arc::new(Grid3::new(g.n(), g.lengths().map(|l| l / mu))?);
    let u = u.to_physical();
    SpectralField::new(grid, u.scale(amplitude).into_values(), Representation::Physical)
}

/// `x -> u(a1 x1, a2 x2, a3 x3)` sampled on the grid by trigonometric
/// interpolation along each axis (no amplitude factor).
pub fn dilate(u: &SpectralField, factors: [f64; 3]) -> Result<SpectralField> {
    u.expect_repr(Representation::Physical)?;
    if factors.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(GpeError::InvalidArgument(format!(
            "dilation factors must be positive, got {factors:?}"
        )));
    }
    let g = u.grid().clone();
    let mut values = u.values().to_vec();
    for axis in 0..3 {
        if factors[axis] == 1.0 {
            continue;
        }
        let m = interpolation_matrix(&g, axis, factors[axis]);
        values = apply_axis(&g, &values, axis, &m);
    }
    SpectralField::new(g, values, Representation::Physical)
}

/// Row `i` holds the weights reproducing `f(a x_i)` from the samples `f(x_j)`.
fn interpolation_matrix(g: &Grid3, axis: usize, a: f64) -> Vec<f64> {
    let n = g.n()[axis];
    let l = g.lengths()[axis];
    let x = g.coords(axis);
    let half = 0.5 * l;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let y = a * x[i];
        if y < -half || y >= half {
            continue;
        }
        for j in 0..n {
            m[i * n + j] = dirichlet(y - x[j], n, l);
        }
    }
    m
}

/// Periodic interpolation kernel of `n` equispaced nodes on a period `l`,
/// with the Nyquist mode taken as a cosine.
fn dirichlet(s: f64, n: usize, l: f64) -> f64 {
    let t = PI * s / l;
    let den = n as f64 * t.tan();
    if den.abs() < 1e-14 {
        // s at a multiple of the period
        return if (t / PI).round() as i64 % 2 == 0 { 1.0 } else { (-1.0f64).powi(n as i32) };
    }
    (n as f64 * t).sin() / den
}

fn apply_axis(g: &Grid3, src: &[Complex64], axis: usize, m: &[f64]) -> Vec<Complex64> {
    let [_, n2, n3] = g.n();
    let n = g.n()[axis];
    let stride = match axis {
        0 => n2 * n3,
        1 => n3,
        _ => 1,
    };
    let mut dst = vec![Complex64::default(); src.len()];
    dst.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let ia = (idx / stride) % n;
        let base = idx - ia * stride;
        let row = &m[ia * n..(ia + 1) * n];
        let mut acc = Complex64::default();
        for (j, w) in row.iter().enumerate() {
            if *w != 0.0 {
                acc += src[base + j * stride] * w;
            }
        }
        *out = acc;
    });
    dst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, l: f64) -> (Arc<Grid3>, KernelTable) {
        let g = Arc::new(Grid3::cube(n, l).unwrap());
        let kt = KernelTable::build(g.clone());
        (g, kt)
    }

    fn gaussian(g: &Arc<Grid3>) -> SpectralField {
        let norm = PI.powf(-0.75);
        SpectralField::from_real_fn(g.clone(), |x| {
            norm * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp()
        })
    }

    #[test]
    fn regimes() {
        let c = |a, b| classify_regime(CouplingParams::new(a, b).unwrap());
        assert_eq!(c(-1.0, 0.0), Regime::Unstable);
        assert_eq!(c(1.0, 1.0), Regime::Unstable);
        assert_eq!(c(1.0, 0.0), Regime::Stable);
        assert_eq!(c(5.0, 1.0), Regime::Stable);
        assert_eq!(c(5.0, -1.0), Regime::Unstable);
        assert_eq!(c(9.0, -1.0), Regime::Stable);
        assert!(CouplingParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn gaussian_oracle_values() {
        let (g, kt) = setup(64, 16.0);
        let u = gaussian(&g);
        let r = evaluate(&u, CouplingParams::new(0.7, -0.4).unwrap(), &kt).unwrap();
        assert!((r.mass - 1.0).abs() < 1e-8);
        assert!((r.kinetic - 1.5).abs() < 1e-6);
        let l4 = (2.0 * PI).powf(-1.5);
        assert!((r.l4norm4 - l4).abs() < 1e-6);
        assert!(r.dipolar.abs() < 1e-8);
        assert!((r.energy - r.g / 3.0 - r.kinetic / 6.0).abs() < 1e-12 * r.energy.abs().max(1.0));
    }

    #[test]
    fn zero_field() {
        let (g, kt) = setup(16, 8.0);
        let r = evaluate(&SpectralField::zeros(g), CouplingParams::new(-1.0, 2.0).unwrap(), &kt).unwrap();
        assert_eq!(r, FunctionalReport::default());
    }

    #[test]
    fn prolate_density_has_negative_dipolar_energy() {
        let (g, kt) = setup(32, 16.0);
        let u = SpectralField::from_real_fn(g, |x| {
            (-(x[0] * x[0] + x[1] * x[1]) / 2.0 - x[2] * x[2] / 8.0).exp()
        });
        let r = evaluate(&u, CouplingParams::new(0.0, 1.0).unwrap(), &kt).unwrap();
        assert!(r.dipolar < 0.0);
        let ps = potential_spectral(&u, CouplingParams::new(0.0, 1.0).unwrap(), &kt).unwrap();
        assert!((ps - r.potential).abs() < 1e-8 * r.potential.abs());
    }

    #[test]
    fn weinstein_admissibility() {
        let (g, kt) = setup(32, 16.0);
        let u = gaussian(&g);
        let r = evaluate(&u, CouplingParams::new(-1.0, 0.0).unwrap(), &kt).unwrap();
        let j = weinstein(&u, CouplingParams::new(-1.0, 0.0).unwrap(), &kt).unwrap();
        assert!((j - r.kinetic.powf(1.5) * r.mass.sqrt() / r.l4norm4).abs() < 1e-12 * j);
        assert!(matches!(
            weinstein(&u, CouplingParams::new(1.0, 0.0).unwrap(), &kt),
            Err(GpeError::NonAdmissible(_))
        ));
    }

    #[test]
    fn dirichlet_kernel_nodes() {
        assert_eq!(dirichlet(0.0, 8, 2.0), 1.0);
        for j in 1..8 {
            assert!(dirichlet(j as f64 * 0.25, 8, 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scale_mu_identity_and_gaussian_law() {
        let (g, kt) = setup(64, 16.0);
        let u = gaussian(&g);
        let same = scale_mu(&u, 1.0).unwrap();
        assert!(same.rel_diff(&u) < 1e-15);
        assert!(scale_mu(&u, 0.0).is_err());
        let p = CouplingParams::new(-1.0, 0.0).unwrap();
        let r = evaluate(&u, p, &kt).unwrap();
        let r2 = evaluate(&scale_mu(&u, 2.0).unwrap(), p, &kt).unwrap();
        assert!((r2.kinetic / r.kinetic - 4.0).abs() < 1e-6 * 4.0);
        assert!((r2.l4norm4 / r.l4norm4 - 8.0).abs() < 1e-6 * 8.0);
        // widening by 2 needs a narrower profile to stay inside the box
        assert!(scale_mu(&u, 0.5).is_err());
        let s = SpectralField::from_real_fn(g.clone(), |x| {
            (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 0.98).exp()
        });
        let rs = evaluate(&s, p, &kt).unwrap();
        let rh = evaluate(&scale_mu(&s, 0.5).unwrap(), p, &kt).unwrap();
        assert!((rh.mass - rs.mass).abs() < 1e-8 * rs.mass);
        assert!((rh.kinetic / rs.kinetic - 0.25).abs() < 1e-6 * 0.25);
        assert!((rh.l4norm4 / rs.l4norm4 - 0.125).abs() < 1e-6 * 0.125);
    }
}
