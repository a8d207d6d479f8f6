//! Reference computations shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use gpelab_core::{Grid3, SpectralField};
use num_complex::Complex64;
use rand::Rng;

/// Sum of `terms` random plane waves with integer modes `|m_a| <= mmax`
/// (no Nyquist content for `mmax < n / 2`).
pub fn band_limited<R: Rng>(grid: &Arc<Grid3>, rng: &mut R, terms: usize, mmax: i64) -> SpectralField {
    let mut hat = SpectralField::zeros(grid.clone()).to_frequency();
    let n = grid.n();
    let wrap = |m: i64, n: usize| m.rem_euclid(n as i64) as usize;
    for _ in 0..terms {
        let m: Vec<i64> = (0..3).map(|_| rng.gen_range(-mmax..=mmax)).collect();
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let idx = grid.index(wrap(m[0], n[0]), wrap(m[1], n[1]), wrap(m[2], n[2]));
        hat.values_mut()[idx] += c;
    }
    hat.inverse().unwrap()
}

/// `amp * exp(-sum x_a^2 / (2 s_a^2))` times an optional smooth phase.
pub fn gaussian(grid: &Arc<Grid3>, amp: f64, s: [f64; 3], phase: impl Fn([f64; 3]) -> f64 + Sync) -> SpectralField {
    SpectralField::from_fn(grid.clone(), |x| {
        let e: f64 = (0..3).map(|a| x[a] * x[a] / (2.0 * s[a] * s[a])).sum();
        Complex64::from_polar(amp * (-e).exp(), phase(x))
    })
}

/// Radial profile of the positive solution of `Delta R - R + R^3 = 0` in 3D,
/// found by shooting on `R(0)`.
pub struct RadialProfile {
    pub r0: f64,
    /// `4 pi \int R^2 r^2 dr`
    pub mass: f64,
    /// `4 pi \int R'^2 r^2 dr`
    pub kinetic: f64,
    /// `4 pi \int R^4 r^2 dr`
    pub l4: f64,
}

enum Fate {
    Crossed,
    Turned,
}

fn rhs(r: f64, y: [f64; 2]) -> [f64; 2] {
    [y[1], -2.0 * y[1] / r + y[0] - y[0].powi(3)]
}

fn rk4(r: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = rhs(r, y);
    let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
    let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
    let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

const H: f64 = 1e-3;
const R_MAX: f64 = 30.0;

/// Integrates from the origin, stopping when the trajectory leaves the
/// decaying branch. Returns the fate and the samples up to that point.
fn shoot(r0: f64) -> (Fate, Vec<(f64, f64, f64)>) {
    let mut r = H;
    let c = (r0 - r0.powi(3)) / 6.0;
    let mut y = [r0 + c * r * r, 2.0 * c * r];
    let mut out = vec![(0.0, r0, 0.0), (r, y[0], y[1])];
    while r < R_MAX {
        y = rk4(r, y, H);
        r += H;
        if y[0] < 0.0 {
            return (Fate::Crossed, out);
        }
        if y[1] > 0.0 {
            return (Fate::Turned, out);
        }
        out.push((r, y[0], y[1]));
    }
    (Fate::Turned, out)
}

pub fn ground_state_profile() -> RadialProfile {
    let (mut lo, mut hi) = (3.0, 6.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid).0 {
            Fate::Crossed => hi = mid,
            Fate::Turned => lo = mid,
        }
    }
    let r0 = 0.5 * (lo + hi);
    let (_, samples) = shoot(r0);
    // trapezoid over the decaying branch; the discarded tail is below 1e-12
    let mut m = 0.0;
    let mut t = 0.0;
    let mut l4 = 0.0;
    for w in samples.windows(2) {
        let (ra, ya, da) = w[0];
        let (rb, yb, db) = w[1];
        let h = rb - ra;
        m += 0.5 * h * (ya * ya * ra * ra + yb * yb * rb * rb);
        t += 0.5 * h * (da * da * ra * ra + db * db * rb * rb);
        l4 += 0.5 * h * (ya.powi(4) * ra * ra + yb.powi(4) * rb * rb);
    }
    RadialProfile {
        r0,
        mass: 4.0 * PI * m,
        kinetic: 4.0 * PI * t,
        l4: 4.0 * PI * l4,
    }
}

impl RadialProfile {
    /// `(M, T, \int Q^4)` of `Q(x) = (b / sqrt 2) R(b x)`, which solves
    /// `-Q''/2 - Q'/r + kappa Q = Q^3` with `kappa = b^2/2`.
    pub fn scaled(&self, b: f64) -> (f64, f64, f64) {
        (self.mass / (2.0 * b), b * self.kinetic / 2.0, b * self.l4 / 4.0)
    }
}

/// Samples `(r, R(r))` of the radial profile on a uniform mesh.
pub fn profile_samples() -> Vec<(f64, f64)> {
    let p = ground_state_profile();
    shoot(p.r0).1.into_iter().map(|(r, y, _)| (r, y)).collect()
}

/// Linear interpolation in a uniform table, zero past its end.
pub fn interp(table: &[(f64, f64)], r: f64) -> f64 {
    let h = table[1].0 - table[0].0;
    let i = (r / h) as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let t = (r - table[i].0) / h;
    table[i].1 * (1.0 - t) + table[i + 1].1 * t
}
