//! Localized virial quantities.
//!
//! For a weight `w` the flow gives
//!
//! ```text
//! V   = 2 \int w |u|^2
//! V'  = 2 Im \int grad w . grad u  conj(u)
//! V'' = 2 \int (Hess w grad u) . grad conj(u) - (1/2) \int Delta^2 w |u|^2
//!       + lambda1 \int Delta w |u|^4 - 2 lambda2 \int grad w . grad(K * |u|^2) |u|^2
//! ```
//!
//! The weights used here are `|x|^2`, `x3^2` and the cylindrical cutoff
//! `rho_R(x) = R^2 psi(|xbar|^2 / R^2)`, `xbar = (x1, x2)`, with
//! `psi(r) = r - \int_0^r (r - s) eta(s) ds` and `eta` a unit-mass bump on
//! `(1, 2)`. Then `rho_R = |xbar|^2` inside `|xbar| <= R` and is constant
//! beyond `sqrt(2) R`. Coordinates are box centred, so every quantity assumes
//! a field localized away from the box faces.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::evolution::{DiagnosticsRow, Monitor};
use crate::field::{index_sum, SpectralField};
use crate::fit::{fit_power_law, PowerLaw};
use crate::functionals::{evaluate, real_field, CouplingParams};
use crate::grid::Grid3;
use crate::kernel::KernelTable;

/// Unnormalized bump `exp(-1/((s-1)(2-s)))` with its first two derivatives.
fn raw_bump(s: f64) -> [f64; 3] {
    if s <= 1.0 || s >= 2.0 {
        return [0.0; 3];
    }
    let q = (s - 1.0) * (2.0 - s);
    let dq = 3.0 - 2.0 * s;
    let e = (-1.0 / q).exp();
    // phi = -1/q
    let d1 = dq / (q * q);
    let d2 = (-2.0 * q - 2.0 * dq * dq) / (q * q * q);
    [e, e * d1, e * (d2 + d1 * d1)]
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| 1.0 / quadrature::integrate(|s| raw_bump(s)[0], 1.0, 2.0, 1e-15).integral)
}

/// `eta(s)`, `eta'(s)`, `eta''(s)` for the unit-mass bump.
pub fn eta(s: f64) -> [f64; 3] {
    raw_bump(s).map(|v| v * bump_norm())
}

/// Node spacing of the `psi` tables.
pub const PSI_SPACING: f64 = 1e-3;

/// Cumulative tables of `H(r) = \int_0^r eta` and `S(r) = \int_0^r s eta(s)`
/// on `[1, 2]`, interpolated by cubic Hermite polynomials using the exact
/// derivatives `eta` and `r eta`. Then `psi = r - r H + S`,
/// `psi' = 1 - H`, `psi'' = -eta`.
#[derive(Debug, Clone)]
pub struct PsiTable {
    h: Vec<f64>,
    s: Vec<f64>,
}

impl PsiTable {
    pub fn build() -> Self {
        let n = (1.0 / PSI_SPACING).round() as usize;
        let mut h = vec![0.0; n + 1];
        let mut s = vec![0.0; n + 1];
        for k in 1..=n {
            let a = 1.0 + (k - 1) as f64 * PSI_SPACING;
            let b = a + PSI_SPACING;
            h[k] = h[k - 1] + quadrature::integrate(|x| eta(x)[0], a, b, 1e-14).integral;
            s[k] = s[k - 1] + quadrature::integrate(|x| x * eta(x)[0], a, b, 1e-14).integral;
        }
        Self { h, s }
    }

    /// `(H(r), S(r))`.
    fn cumulative(&self, r: f64) -> (f64, f64) {
        if r <= 1.0 {
            return (0.0, 0.0);
        }
        let n = self.h.len() - 1;
        if r >= 2.0 {
            return (self.h[n], self.s[n]);
        }
        let x = (r - 1.0) / PSI_SPACING;
        let k = (x.floor() as usize).min(n - 1);
        let t = x - k as f64;
        let (a, b) = (1.0 + k as f64 * PSI_SPACING, 1.0 + (k + 1) as f64 * PSI_SPACING);
        let (ea, eb) = (eta(a)[0], eta(b)[0]);
        let herm = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * PSI_SPACING * d0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * PSI_SPACING * d1
        };
        (
            herm(self.h[k], self.h[k + 1], ea, eb),
            herm(self.s[k], self.s[k + 1], a * ea, b * eb),
        )
    }

    pub fn psi(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return r;
        }
        let (h, s) = self.cumulative(r);
        r - r * h + s
    }

    pub fn dpsi(&self, r: f64) -> f64 {
        1.0 - self.cumulative(r).0
    }

    pub fn d2psi(&self, r: f64) -> f64 {
        -eta(r)[0]
    }

    /// `F(s) = \int_0^s eta + s eta(s)`: the cutoff defect at
    /// `s = |xbar|^2 / R^2`.
    pub fn defect(&self, s: f64) -> f64 {
        // Hermite interpolation of H can dip a few ulps below zero where
        // the bump underflows
        (self.cumulative(s).0 + s * eta(s)[0]).max(0.0)
    }
}

fn psi_table() -> &'static PsiTable {
    static TABLE: OnceLock<PsiTable> = OnceLock::new();
    TABLE.get_or_init(PsiTable::build)
}

/// A weight with the derivatives the virial identities need, sampled on
/// the grid. Hessian entries are stored as `11, 22, 33, 12, 13, 23`.
#[derive(Debug, Clone)]
pub struct VirialWeight {
    grid: Arc<Grid3>,
    pub value: Vec<f64>,
    pub grad: [Vec<f64>; 3],
    pub hess: [Vec<f64>; 6],
    pub lap: Vec<f64>,
    pub bilap: Vec<f64>,
}

const HESS_INDEX: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

impl VirialWeight {
    fn from_fn(grid: Arc<Grid3>, f: impl Fn([f64; 3]) -> WeightSample + Sync) -> Self {
        let samples: Vec<WeightSample> = grid.positions().par_iter().map(|x| f(*x)).collect();
        let col = |g: &dyn Fn(&WeightSample) -> f64| samples.iter().map(g).collect::<Vec<f64>>();
        Self {
            value: col(&|s| s.value),
            grad: [0, 1, 2].map(|a| col(&|s| s.grad[a])),
            hess: [0, 1, 2, 3, 4, 5].map(|a| col(&|s| s.hess[a])),
            lap: col(&|s| s.lap),
            bilap: col(&|s| s.bilap),
            grid,
        }
    }

    /// `|x|^2`.
    pub fn quadratic(grid: Arc<Grid3>) -> Self {
        Self::from_fn(grid, |x| WeightSample {
            value: x.iter().map(|v| v * v).sum(),
            grad: x.map(|v| 2.0 * v),
            hess: [2.0, 2.0, 2.0, 0.0, 0.0, 0.0],
            lap: 6.0,
            bilap: 0.0,
        })
    }

    /// `x3^2`.
    pub fn x3_squared(grid: Arc<Grid3>) -> Self {
        Self::from_fn(grid, |x| WeightSample {
            value: x[2] * x[2],
            grad: [0.0, 0.0, 2.0 * x[2]],
            hess: [0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
            lap: 2.0,
            bilap: 0.0,
        })
    }

    /// `rho_R`, optionally plus `x3^2`.
    pub fn cutoff(profile: &CutoffProfile, include_x3: bool) -> Self {
        let w = profile.weight.clone();
        if include_x3 {
            w.plus(&Self::x3_squared(profile.grid.clone()))
                .expect("same grid")
        } else {
            w
        }
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if *self.grid != *other.grid {
            return Err(GpeError::GridMismatch);
        }
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();
        Ok(Self {
            grid: self.grid.clone(),
            value: add(&self.value, &other.value),
            grad: [0, 1, 2].map(|a| add(&self.grad[a], &other.grad[a])),
            hess: [0, 1, 2, 3, 4, 5].map(|a| add(&self.hess[a], &other.hess[a])),
            lap: add(&self.lap, &other.lap),
            bilap: add(&self.bilap, &other.bilap),
        })
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }
}

struct WeightSample {
    value: f64,
    grad: [f64; 3],
    hess: [f64; 6],
    lap: f64,
    bilap: f64,
}

/// The cylindrical cutoff at radius `R` on a grid.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    pub radius: f64,
    grid: Arc<Grid3>,
    weight: VirialWeight,
    /// `F_R` on the grid.
    pub defect: Vec<f64>,
}

impl CutoffProfile {
    /// Builds `rho_R` and `F_R` and asserts the construction invariants.
    pub fn build(radius: f64, grid: Arc<Grid3>) -> Result<Self> {
        let half = 0.5 * grid.lengths()[0].min(grid.lengths()[1]);
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GpeError::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        if std::f64::consts::SQRT_2 * radius >= half {
            return Err(GpeError::Geometry(format!(
                "sqrt(2) R = {:.4} does not fit inside the transverse half width {half}",
                std::f64::consts::SQRT_2 * radius
            )));
        }
        let tab = psi_table();
        let r2 = radius * radius;
        let weight = VirialWeight::from_fn(grid.clone(), |x| {
            let s = (x[0] * x[0] + x[1] * x[1]) / r2;
            let d1 = tab.dpsi(s);
            let [e0, e1, e2] = eta(s);
            let d2 = -e0;
            WeightSample {
                value: r2 * tab.psi(s),
                grad: [2.0 * x[0] * d1, 2.0 * x[1] * d1, 0.0],
                hess: [
                    2.0 * d1 + 4.0 * x[0] * x[0] / r2 * d2,
                    2.0 * d1 + 4.0 * x[1] * x[1] / r2 * d2,
                    0.0,
                    4.0 * x[0] * x[1] / r2 * d2,
                    0.0,
                    0.0,
                ],
                lap: 4.0 * d1 + 4.0 * s * d2,
                bilap: -16.0 / r2 * (2.0 * e0 + 4.0 * s * e1 + s * s * e2),
            }
        });
        let defect: Vec<f64> = grid
            .positions()
            .iter()
            .map(|x| tab.defect((x[0] * x[0] + x[1] * x[1]) / r2))
            .collect();
        let profile = Self {
            radius,
            grid,
            weight,
            defect,
        };
        profile.check_invariants()?;
        Ok(profile)
    }

    fn check_invariants(&self) -> Result<()> {
        let tab = psi_table();
        let r2 = self.radius * self.radius;
        let fail = |m: String| Err(GpeError::Numerical(format!("cutoff invariant violated: {m}")));
        for (x, f) in self.grid.positions().iter().zip(&self.defect) {
            let s = (x[0] * x[0] + x[1] * x[1]) / r2;
            // below s = 1.01 the bump underflows, so positivity is only
            // checked beyond it
            let ok = if s <= 1.0 {
                *f == 0.0
            } else if s >= 2.0 {
                (f - 1.0).abs() <= 1e-10
            } else {
                *f >= 0.0 && (s < 1.01 || *f > 0.0)
            };
            if !ok {
                return fail(format!("F_R = {f} at |xbar|^2/R^2 = {s}"));
            }
        }
        if tab.psi(0.5) != 0.5 || tab.dpsi(2.0).abs() > 1e-10 || tab.dpsi(3.0).abs() > 1e-10 {
            return fail("psi is not r below 1 or not flat beyond 2".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.weight.value
    }

    pub fn table(&self) -> &'static PsiTable {
        psi_table()
    }
}

/// Share of the mass outside the central half of the box
/// (`|x_a| > L_a / 4` on some axis).
pub fn outer_mass_fraction(u: &SpectralField) -> Result<f64> {
    let u = u.to_physical();
    let g = u.grid();
    let quarter = g.lengths().map(|l| 0.25 * l);
    let pos = g.positions();
    let vals = u.values();
    let outer = index_sum(vals.len(), |i| {
        let x = pos[i];
        if (0..3).any(|a| x[a].abs() > quarter[a]) {
            vals[i].norm_sqr()
        } else {
            0.0
        }
    }) * g.dv();
    let total = u.mass()?;
    Ok(if total > 0.0 { outer / total } else { 0.0 })
}

/// `2 \int w |u|^2`.
pub fn virial_value_with(u: &SpectralField, w: &VirialWeight) -> Result<f64> {
    let u = u.to_physical();
    same_grid(&u, w)?;
    let vals = u.values();
    Ok(2.0 * index_sum(vals.len(), |i| w.value[i] * vals[i].norm_sqr()) * u.grid().dv())
}

/// `2 Im \int grad w . grad u conj(u)`.
pub fn virial_first_derivative_with(u: &SpectralField, w: &VirialWeight) -> Result<f64> {
    let u = u.to_physical();
    same_grid(&u, w)?;
    let du = u.gradient();
    let vals = u.values();
    let s = index_sum(vals.len(), |i| {
        let c = vals[i].conj();
        (0..3).map(|a| w.grad[a][i] * (du[a].values()[i] * c).im).sum()
    });
    Ok(2.0 * s * u.grid().dv())
}

/// The four pieces of the second derivative of `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialTerms {
    /// `2 \int (Hess w grad u) . grad conj(u)`.
    pub hessian: f64,
    /// `(1/2) \int Delta^2 w |u|^2` (enters with a minus sign).
    pub mass_term: f64,
    /// `lambda1 \int Delta w |u|^4`.
    pub local: f64,
    /// `-2 lambda2 \int grad w . grad(K * |u|^2) |u|^2`.
    pub dipolar: f64,
}

impl VirialTerms {
    pub fn total(&self) -> f64 {
        self.hessian - self.mass_term + self.local + self.dipolar
    }
}

pub fn virial_terms_with(
    u: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    w: &VirialWeight,
) -> Result<VirialTerms> {
    let u = u.to_physical();
    same_grid(&u, w)?;
    let g = u.grid().clone();
    let dv = g.dv();
    let du = u.gradient();
    let vals = u.values();
    let rho: Vec<f64> = vals.par_iter().map(|v| v.norm_sqr()).collect();
    let hessian = 2.0
        * index_sum(vals.len(), |i| {
            HESS_INDEX
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| {
                    let h = w.hess[k][i];
                    if h == 0.0 {
                        return 0.0;
                    }
                    let pair = (du[a].values()[i] * du[b].values()[i].conj()).re;
                    if a == b {
                        h * pair
                    } else {
                        2.0 * h * pair
                    }
                })
                .sum()
        })
        * dv;
    let mass_term = 0.5 * index_sum(vals.len(), |i| w.bilap[i] * rho[i]) * dv;
    let local = p.lambda1 * index_sum(vals.len(), |i| w.lap[i] * rho[i] * rho[i]) * dv;
    let dipolar = if p.lambda2 == 0.0 {
        0.0
    } else {
        let krho = kt.convolve(&real_field(g.clone(), &rho))?;
        let dk = krho.gradient();
        -2.0 * p.lambda2
            * index_sum(vals.len(), |i| {
                (0..3).map(|a| w.grad[a][i] * dk[a].values()[i].re).sum::<f64>() * rho[i]
            })
            * dv
    };
    Ok(VirialTerms {
        hessian,
        mass_term,
        local,
        dipolar,
    })
}

fn same_grid(u: &SpectralField, w: &VirialWeight) -> Result<()> {
    if **u.grid() == *w.grid {
        Ok(())
    } else {
        Err(GpeError::GridMismatch)
    }
}

pub fn virial_value(u: &SpectralField, profile: &CutoffProfile, include_x3: bool) -> Result<f64> {
    virial_value_with(u, &VirialWeight::cutoff(profile, include_x3))
}

pub fn virial_first_derivative(u: &SpectralField, profile: &CutoffProfile, include_x3: bool) -> Result<f64> {
    virial_first_derivative_with(u, &VirialWeight::cutoff(profile, include_x3))
}

/// Virial quantities of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialRow {
    pub value: f64,
    pub first_derivative: f64,
    pub rhs_full: f64,
    pub four_g: f64,
    /// `rhs_full - 4 G(u)`.
    pub remainder: f64,
    pub mass_term: f64,
    pub outer_mass_fraction: f64,
}

pub fn virial_row_with(
    u: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    w: &VirialWeight,
) -> Result<VirialRow> {
    let u = u.to_physical();
    let terms = virial_terms_with(&u, p, kt, w)?;
    let r = evaluate(&u, p, kt)?;
    let rhs_full = terms.total();
    Ok(VirialRow {
        value: virial_value_with(&u, w)?,
        first_derivative: virial_first_derivative_with(&u, w)?,
        rhs_full,
        four_g: 4.0 * r.g,
        remainder: rhs_full - 4.0 * r.g,
        mass_term: terms.mass_term,
        outer_mass_fraction: outer_mass_fraction(&u)?,
    })
}

pub fn virial_rhs(
    u: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    profile: &CutoffProfile,
    include_x3: bool,
) -> Result<VirialRow> {
    virial_row_with(u, p, kt, &VirialWeight::cutoff(profile, include_x3))
}

/// Fills the virial columns of every diagnostics row.
pub struct VirialMonitor<'a> {
    pub weight: VirialWeight,
    pub params: CouplingParams,
    pub kernel: &'a KernelTable,
}

impl Monitor for VirialMonitor<'_> {
    fn observe(&mut self, u: &SpectralField, row: &mut DiagnosticsRow) -> Result<()> {
        let v = virial_row_with(u, self.params, self.kernel, &self.weight)?;
        row.virial = Some(v.value);
        row.virial_dt = Some(v.first_derivative);
        row.rhs_full = Some(v.rhs_full);
        row.remainder = Some(v.remainder);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderSample {
    pub radius: f64,
    /// `\int F_R |u|^4`.
    pub defect_l4: f64,
    pub mass_term: f64,
    pub remainder: f64,
    /// `remainder / ||u||^2_{H1dot}`.
    pub remainder_ratio: f64,
    /// `R^{-1} ||u||^2_{H1dot}`.
    pub strauss_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderTable {
    pub samples: Vec<RemainderSample>,
    /// `None` when the values vanish identically.
    pub defect_fit: Option<PowerLaw>,
    pub mass_fit: Option<PowerLaw>,
    pub remainder_fit: Option<PowerLaw>,
}

/// Remainder pieces of the `rho_R + x3^2` virial over a list of radii.
pub fn remainder_scaling(
    u: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    radii: &[f64],
) -> Result<RemainderTable> {
    if radii.len() < 3 {
        return Err(GpeError::InvalidArgument(format!(
            "need at least 3 radii, got {}",
            radii.len()
        )));
    }
    let u = u.to_physical();
    let t = evaluate(&u, p, kt)?.kinetic;
    let rho: Vec<f64> = u.values().iter().map(|v| v.norm_sqr()).collect();
    let dv = u.grid().dv();
    let mut samples = Vec::with_capacity(radii.len());
    for &radius in radii {
        let profile = CutoffProfile::build(radius, u.grid().clone())?;
        let row = virial_rhs(&u, p, kt, &profile, true)?;
        let defect_l4 = index_sum(rho.len(), |i| profile.defect[i] * rho[i] * rho[i]) * dv;
        samples.push(RemainderSample {
            radius,
            defect_l4,
            mass_term: row.mass_term,
            remainder: row.remainder,
            remainder_ratio: row.remainder / t,
            strauss_bound: t / radius,
        });
    }
    let col = |f: fn(&RemainderSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    Ok(RemainderTable {
        defect_fit: fit_power_law(radii, &col(|s| s.defect_l4)),
        mass_fit: fit_power_law(radii, &col(|s| s.mass_term)),
        remainder_fit: fit_power_law(radii, &col(|s| s.remainder)),
        samples,
    })
}
