//! Numerical checks of the off-diagonal decay of zero-degree multipliers
//! between functions living inside and outside a cylinder `{|x̄| <= r}`, and
//! of the biharmonic representation of `R_i^4`.
//!
//! Everything is measured on the periodic grid, so the `R^-3` laws only show
//! up while the geometry stays well inside the box.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::field::{weighted_sum, SpectralField};
use crate::fit::{fit_power_law, PowerLaw};
use crate::grid::Grid3;
use crate::kernel::{spectral_pairing, Axis, KernelTable, Symbol};

fn cyl_radius(x: [f64; 3]) -> f64 {
    x[0].hypot(x[1])
}

fn half_width(grid: &Grid3) -> f64 {
    let l = grid.lengths();
    0.5 * l[0].min(l[1])
}

/// `exp(-1/(1-r^2))` on `|r| < 1`, zero outside.
fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `1_{|x̄| <= radius} u`.
pub fn inside_cylinder(u: &SpectralField, radius: f64) -> Result<SpectralField> {
    gate(u, |x| cyl_radius(x) <= radius)
}

/// `1_{|x̄| > radius} u`; adds up with [`inside_cylinder`] to `u` exactly.
pub fn outside_cylinder(u: &SpectralField, radius: f64) -> Result<SpectralField> {
    gate(u, |x| cyl_radius(x) > radius)
}

fn gate(u: &SpectralField, keep: impl Fn([f64; 3]) -> bool + Sync) -> Result<SpectralField> {
    u.expect_repr(crate::Representation::Physical)?;
    let pos = u.grid().positions();
    Ok(u.map(|i, v| if keep(pos[i]) { v } else { Complex64::new(0.0, 0.0) }))
}

fn l1_norm(u: &SpectralField) -> f64 {
    weighted_sum(u.values(), |_, v| v.norm()) * u.grid().dv()
}

fn sup_where(u: &SpectralField, keep: impl Fn([f64; 3]) -> bool) -> f64 {
    let pos = u.grid().positions();
    u.values()
        .iter()
        .zip(&pos)
        .filter(|(_, x)| keep(**x))
        .fold(0.0_f64, |m, (v, _)| m.max(v.norm()))
}

/// Profile shapes in units of `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairShape {
    /// Gaussian width along `x3`.
    pub sigma3: f64,
    /// Radial width of the outer annulus.
    pub outer_width: f64,
}

impl Default for PairShape {
    fn default() -> Self {
        Self {
            sigma3: 0.25,
            outer_width: 1.0,
        }
    }
}

/// `g` lives in `{|x̄| <= gamma1 R}`, `f` in `{|x̄| >= gamma2 R}`. Both are
/// nonnegative and have unit `L^1` norm.
#[derive(Debug, Clone)]
pub struct LocalizationPair {
    pub f: SpectralField,
    pub g: SpectralField,
    pub gamma1: f64,
    pub gamma2: f64,
    pub radius: f64,
}

impl LocalizationPair {
    pub fn separation(&self) -> f64 {
        self.gamma2 - self.gamma1
    }

    /// `(∫_{|x̄|<=γ1R}|f|^2 / ‖f‖^2, ∫_{|x̄|>=γ2R}|g|^2 / ‖g‖^2)`.
    pub fn support_leaks(&self) -> Result<(f64, f64)> {
        let (r1, r2) = (self.gamma1 * self.radius, self.gamma2 * self.radius);
        let f_in = inside_cylinder(&self.f, r1)?.mass()? / self.f.mass()?;
        let g_out = gate(&self.g, |x| cyl_radius(x) >= r2)?.mass()? / self.g.mass()?;
        Ok((f_in, g_out))
    }
}

pub fn make_pair(grid: Arc<Grid3>, radius: f64, gamma1: f64, gamma2: f64, shape: PairShape) -> Result<LocalizationPair> {
    if !(radius > 0.0 && gamma1 > 0.0 && shape.sigma3 > 0.0 && shape.outer_width > 0.0) {
        return Err(GpeError::InvalidArgument("radius, gammas and shape widths must be positive".into()));
    }
    if gamma2 <= gamma1 {
        return Err(GpeError::InvalidArgument(format!(
            "need gamma2 > gamma1, got {gamma1} and {gamma2}"
        )));
    }
    let hw = half_width(&grid);
    if gamma2 * radius > hw {
        return Err(GpeError::Geometry(format!(
            "gamma2 R = {} exceeds the transverse half width {hw}",
            gamma2 * radius
        )));
    }
    let s3 = shape.sigma3 * radius;
    let h3 = 0.5 * grid.lengths()[2];
    if 6.0 * s3 > h3 {
        return Err(GpeError::Geometry(format!("x3 profile width {s3} too wide for the box")));
    }
    let (a, w) = (gamma2 * radius, shape.outer_width * radius);
    let r1 = gamma1 * radius;
    let z = |x: [f64; 3]| (-0.5 * (x[2] / s3).powi(2)).exp();
    let g = SpectralField::from_real_fn(grid.clone(), |x| bump(cyl_radius(x) / r1) * z(x));
    let f = SpectralField::from_real_fn(grid, |x| {
        let r = cyl_radius(x);
        let t = 2.0 * (r - a) / w - 1.0;
        bump(t) * z(x)
    });
    let (nf, ng) = (l1_norm(&f), l1_norm(&g));
    if nf == 0.0 || ng == 0.0 {
        return Err(GpeError::Geometry("profiles are not resolved by the grid".into()));
    }
    Ok(LocalizationPair {
        f: f.scale(1.0 / nf),
        g: g.scale(1.0 / ng),
        gamma1,
        gamma2,
        radius,
    })
}

pub fn make_pairs(grid: Arc<Grid3>, radii: &[f64], gamma1: f64, gamma2: f64, shape: PairShape) -> Result<Vec<LocalizationPair>> {
    radii
        .iter()
        .map(|&r| make_pair(grid.clone(), r, gamma1, gamma2, shape))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub radius: f64,
    pub value: f64,
    /// `R^-3 ‖f‖_{L^1} ‖g‖_{L^1}` (or the one-sided analogue).
    pub bound_unit: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub label: String,
    pub rows: Vec<DecayRow>,
    pub fit: PowerLaw,
    /// Largest ratio over the sweep: the constant `C` of the bound.
    pub constant: f64,
}

impl DecayReport {
    fn from_rows(label: String, rows: Vec<DecayRow>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(GpeError::InvalidArgument("a decay sweep needs at least 3 radii".into()));
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let fit = fit_power_law(&xs, &ys)
            .ok_or_else(|| GpeError::Numerical(format!("degenerate fit for {label}")))?;
        let constant = rows.iter().fold(0.0_f64, |m, r| m.max(r.ratio));
        Ok(Self {
            label,
            rows,
            fit,
            constant,
        })
    }
}

pub fn symbol_label(sym: Symbol) -> String {
    let n = |a: Axis| a.index() + 1;
    match sym {
        Symbol::Dipolar => "khat".into(),
        Symbol::Riesz2(j) => format!("riesz2_{}", n(j)),
        Symbol::Riesz4(j) => format!("riesz4_{}", n(j)),
        Symbol::Mixed(k, h) => format!("riesz2_{}_riesz2_{}", n(k), n(h)),
        Symbol::DipolarDerivative3 => "xi3_dkhat".into(),
    }
}

/// `|<m(D) f, g>|` over a sweep of pairs for any symbol of the table.
pub fn decay_symbol(pairs: &[LocalizationPair], kt: &KernelTable, sym: Symbol) -> Result<DecayReport> {
    let rows = pairs
        .iter()
        .map(|p| {
            let value = kt.pairing(&p.f, &p.g, sym)?.norm();
            let bound_unit = p.radius.powi(-3) * l1_norm(&p.f) * l1_norm(&p.g);
            Ok(DecayRow {
                radius: p.radius,
                value,
                bound_unit,
                ratio: value / bound_unit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DecayReport::from_rows(symbol_label(sym), rows)
}

pub fn decay_r4(pairs: &[LocalizationPair], kt: &KernelTable, axis: Axis) -> Result<DecayReport> {
    decay_symbol(pairs, kt, Symbol::Riesz4(axis))
}

pub fn decay_mixed_r2r2(pairs: &[LocalizationPair], kt: &KernelTable, k: Axis, h: Axis) -> Result<DecayReport> {
    decay_symbol(pairs, kt, Symbol::Mixed(k, h))
}

/// Which side the source lives on for the pointwise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Source `f` outside, evaluation inside `{|x̄| <= γ1R}`.
    OuterToInner,
    /// Source `g` inside, evaluation outside `{|x̄| >= γ2R}`.
    InnerToOuter,
}

/// `sup |R_j^2 h|` on the far side of the pair. The row's `bound_unit` is
/// `R^-3 ‖source‖_{L^1}`.
pub fn decay_r2_pointwise(pair: &LocalizationPair, kt: &KernelTable, axis: Axis, dir: Direction) -> Result<DecayRow> {
    let (r1, r2) = (pair.gamma1 * pair.radius, pair.gamma2 * pair.radius);
    let source = match dir {
        Direction::OuterToInner => &pair.f,
        Direction::InnerToOuter => &pair.g,
    };
    pointwise_row(source, pair.radius, kt, axis, |x| match dir {
        Direction::OuterToInner => cyl_radius(x) <= r1,
        Direction::InnerToOuter => cyl_radius(x) >= r2,
    })
}

fn pointwise_row(
    source: &SpectralField,
    radius: f64,
    kt: &KernelTable,
    axis: Axis,
    region: impl Fn([f64; 3]) -> bool,
) -> Result<DecayRow> {
    let h = kt.riesz_pow(source, axis, 2)?;
    let value = sup_where(&h, region);
    let bound_unit = radius.powi(-3) * l1_norm(source);
    let ratio = if bound_unit > 0.0 { value / bound_unit } else { 0.0 };
    Ok(DecayRow {
        radius,
        value,
        bound_unit,
        ratio,
    })
}

/// Pointwise check for an arbitrary source evaluated inside `{|x̄| <= r}`.
pub fn pointwise_inside(source: &SpectralField, radius: f64, inner: f64, kt: &KernelTable, axis: Axis) -> Result<DecayRow> {
    pointwise_row(source, radius, kt, axis, |x| cyl_radius(x) <= inner)
}

pub fn decay_r2_sweep(pairs: &[LocalizationPair], kt: &KernelTable, axis: Axis, dir: Direction) -> Result<DecayReport> {
    let rows = pairs
        .iter()
        .map(|p| decay_r2_pointwise(p, kt, axis, dir))
        .collect::<Result<Vec<_>>>()?;
    let tag = match dir {
        Direction::OuterToInner => "out_in",
        Direction::InnerToOuter => "in_out",
    };
    DecayReport::from_rows(format!("sup_riesz2_{}_{tag}", axis.index() + 1), rows)
}

// ---------------------------------------------------------------------------
// Biharmonic representation of R_i^4

pub const T_MIN: f64 = 1e-6;
pub const T_MAX: f64 = 1e3;
pub const T_NODES: usize = 200;
pub const SCALAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSample {
    pub xi: [f64; 3],
    pub axis: Axis,
    pub quadrature: f64,
    pub exact: f64,
}

/// `xi_i^4 |xi|^4 ∫_0^∞ e^{-t|xi|^4} t dt`, with `t = s/(|xi|^4 (1-s))`
/// mapping the half line onto `[0, 1)` so the integrand shape does not
/// depend on `xi`.
pub fn biharmonic_scalar(xi: [f64; 3], axis: Axis) -> Result<ScalarSample> {
    let s2: f64 = xi.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        return Err(GpeError::InvalidArgument("xi must be nonzero".into()));
    }
    let a = s2 * s2;
    let xi4 = xi[axis.index()].powi(4);
    // with dt = ds / (a (1-s)^2) the t-integral is a^-2 times this one
    let out = quadrature::integrate(
        |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let tau = s / (1.0 - s);
            (-tau).exp() * tau / ((1.0 - s) * (1.0 - s))
        },
        0.0,
        1.0,
        1e-14,
    );
    if !out.integral.is_finite() || out.error_estimate > SCALAR_TOL {
        return Err(GpeError::NotConverged {
            iterations: out.num_function_evaluations as usize,
            detail: format!("t-integral at xi = {xi:?}, error estimate {}", out.error_estimate),
        });
    }
    Ok(ScalarSample {
        xi,
        axis,
        quadrature: xi4 * a * (out.integral / (a * a)),
        exact: xi4 / a,
    })
}

/// Geometric nodes on `[T_MIN, T_MAX]` with trapezoid weights in `log t`.
fn log_trapezoid() -> Vec<(f64, f64)> {
    let h = (T_MAX / T_MIN).ln() / (T_NODES - 1) as f64;
    (0..T_NODES)
        .map(|k| {
            let t = T_MIN * (h * k as f64).exp();
            let w = if k == 0 || k == T_NODES - 1 { 0.5 * h } else { h };
            (t, w)
        })
        .collect()
}

/// Share of `∫_0^∞ a^2 t e^{-at} dt = 1` missed by cutting at `T_MIN` and
/// `T_MAX`.
pub fn truncation_fraction(a: f64) -> f64 {
    let x = a * T_MIN;
    let head = if x < 1e-3 {
        x * x * (0.5 - x / 3.0)
    } else {
        1.0 - (-x).exp() * (1.0 + x)
    };
    let y = a * T_MAX;
    head + (-y).exp() * (1.0 + y)
}

#[derive(Debug, Clone)]
pub struct BiharmonicReport {
    pub scalar: Vec<ScalarSample>,
    pub max_scalar_error: f64,
    pub symbol_route: Complex64,
    pub time_route: Complex64,
    pub rel_error: f64,
    /// `Σ |m f̂ ĝ| * truncation / |<R^4 f, g>|` over the spectrum.
    pub truncation_bound: f64,
}

pub fn biharmonic_check(
    kt: &KernelTable,
    xis: &[[f64; 3]],
    f: &SpectralField,
    g: &SpectralField,
    axis: Axis,
) -> Result<BiharmonicReport> {
    let scalar = xis
        .iter()
        .map(|&xi| biharmonic_scalar(xi, axis))
        .collect::<Result<Vec<_>>>()?;
    let max_scalar_error = scalar
        .iter()
        .fold(0.0_f64, |m, s| m.max((s.quadrature - s.exact).abs()));

    let grid = kt.grid();
    let symbol_route = kt.pairing(f, g, Symbol::Riesz4(axis))?;
    let nodes = log_trapezoid();
    let xi = grid.wavevectors();
    // integrand t * xi_i^4 |xi|^4 e^{-t|xi|^4}, integrated in log t
    let m_time: Vec<f64> = xi
        .par_iter()
        .map(|v| {
            let s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let a = s2 * s2;
            let pre = v[axis.index()].powi(4) * a;
            if pre == 0.0 {
                return 0.0;
            }
            pre * nodes.iter().map(|(t, w)| w * t * t * (-a * t).exp()).sum::<f64>()
        })
        .collect();
    let time_route = spectral_pairing(grid, &m_time, f, g);
    let norm = symbol_route.norm();
    let rel_error = (time_route - symbol_route).norm() / norm;

    let fh = f.to_frequency();
    let gh = g.to_frequency();
    let m4 = kt.symbol(Symbol::Riesz4(axis));
    let k2 = grid.k_squared();
    let tail: Vec<Complex64> = (0..m4.len())
        .map(|i| {
            let v = m4[i] * (fh.values()[i] * gh.values()[i].conj()).norm();
            Complex64::new(v * truncation_fraction(k2[i] * k2[i]), 0.0)
        })
        .collect();
    let truncation_bound = weighted_sum(&tail, |_, v| v.re) * grid.spectral_weight() / norm;
    Ok(BiharmonicReport {
        scalar,
        max_scalar_error,
        symbol_route,
        time_route,
        rel_error,
        truncation_bound,
    })
}

/// Twenty fixed frequencies off the origin, spread over a decade of scales.
pub fn sample_frequencies() -> Vec<[f64; 3]> {
    let mut out = vec![[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
    let mut k = 0.0_f64;
    while out.len() < 20 {
        k += 1.0;
        let s = 0.3 * (k * 0.37).exp();
        out.push([s * (1.3 * k).cos(), s * (0.7 * k).sin(), s * (0.5 * k + 0.2).cos()]);
    }
    out
}

// ---------------------------------------------------------------------------
// Inner/outer interaction audit

/// Both sides of `2∫x3 ∂3(K*f) g + 2∫x3 ∂3(K*g) f = -2∫(K*f) g - 2∫ ξ3∂ξ3K̂ f̂ ĝ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySides {
    pub position_route: f64,
    pub symbol_route: f64,
}

impl IdentitySides {
    pub fn rel_error(&self) -> f64 {
        let scale = self.symbol_route.abs().max(self.position_route.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.position_route - self.symbol_route).abs() / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionAudit {
    pub radius: f64,
    pub mass_w_ii: f64,
    pub mass_u_o: f64,
    /// `f = g = |u_o|^2`.
    pub outer_outer: IdentitySides,
    /// `f = |u_i|^2`, `g = |u_o|^2`.
    pub inner_outer: IdentitySides,
    /// `<R_3^4 |w_ii|^2, |u_o|^2>`.
    pub r4_cross: f64,
    /// `<R_j^2 |w_ii|^2, |u_o|^2>` for `j = 1, 2, 3`.
    pub r2_cross: [f64; 3],
}

/// Fraction of `∫|f|` with `|x3| > L3/4`; the position route needs `f` to
/// stay clear of the periodic seam in `x3`.
fn x3_seam_fraction(f: &SpectralField) -> f64 {
    let q = 0.25 * f.grid().lengths()[2];
    let pos = f.grid().positions();
    let far = weighted_sum(f.values(), |i, v| if pos[i][2].abs() > q { v.norm() } else { 0.0 });
    let all = weighted_sum(f.values(), |_, v| v.norm());
    if all == 0.0 {
        0.0
    } else {
        far / all
    }
}

pub const SEAM_TOL: f64 = 1e-10;

fn x3_dx3(a: &SpectralField) -> SpectralField {
    let pos = a.grid().positions();
    a.partial(2).map(|i, v| v * pos[i][2])
}

fn identity_sides(kt: &KernelTable, f: &SpectralField, g: &SpectralField) -> Result<IdentitySides> {
    let kf = kt.convolve(f)?;
    let kg = kt.convolve(g)?;
    let lhs = 2.0 * (x3_dx3(&kf).inner(g)?.re + x3_dx3(&kg).inner(f)?.re);
    let rhs = -2.0 * kf.inner(g)?.re - 2.0 * kt.pairing(f, g, Symbol::DipolarDerivative3)?.re;
    Ok(IdentitySides {
        position_route: lhs,
        symbol_route: rhs,
    })
}

/// Both sides of `2∫ x·∇(K*f) f = -3∫(K*f) f`.
pub fn dilation_identity(f: &SpectralField, kt: &KernelTable) -> Result<IdentitySides> {
    let kf = kt.convolve(f)?;
    let pos = f.grid().positions();
    let mut lhs = 0.0;
    for a in 0..3 {
        let d = kf.partial(a).map(|i, v| v * pos[i][a]);
        lhs += 2.0 * d.inner(f)?.re;
    }
    Ok(IdentitySides {
        position_route: lhs,
        symbol_route: -3.0 * kf.inner(f)?.re,
    })
}

/// Splits `u` at `|x̄| = 4R` and `R/10` and checks the commutator identity
/// on both the outer-outer and the inner-outer interaction.
pub fn interaction_audit(u: &SpectralField, radius: f64, kt: &KernelTable) -> Result<InteractionAudit> {
    let hw = half_width(kt.grid());
    if !(radius > 0.0) || 4.0 * radius >= hw {
        return Err(GpeError::Geometry(format!("4R = {} must lie inside the half width {hw}", 4.0 * radius)));
    }
    let rho = u.density()?;
    if x3_seam_fraction(&rho) > SEAM_TOL {
        return Err(GpeError::Geometry("density reaches the x3 seam of the box".into()));
    }
    let u_i = inside_cylinder(u, 4.0 * radius)?;
    let u_o = u.axpy(-1.0, &u_i)?;
    let w_ii = inside_cylinder(u, radius / 10.0)?;
    let (rho_i, rho_o, rho_w) = (u_i.density()?, u_o.density()?, w_ii.density()?);

    // the outer-outer identity is the halved form with f = g
    let oo = identity_sides(kt, &rho_o, &rho_o)?;
    let outer_outer = IdentitySides {
        position_route: 0.5 * oo.position_route,
        symbol_route: 0.5 * oo.symbol_route,
    };
    let inner_outer = identity_sides(kt, &rho_i, &rho_o)?;
    let r4_cross = kt.pairing(&rho_w, &rho_o, Symbol::Riesz4(Axis::X3))?.re;
    let mut r2_cross = [0.0; 3];
    for ax in Axis::ALL {
        r2_cross[ax.index()] = kt.pairing(&rho_w, &rho_o, Symbol::Riesz2(ax))?.re;
    }
    Ok(InteractionAudit {
        radius,
        mass_w_ii: w_ii.mass()?,
        mass_u_o: u_o.mass()?,
        outer_outer,
        inner_outer,
        r4_cross,
        r2_cross,
    })
}

/// Cross terms over a sweep, normalized by `‖w_ii‖^2 ‖u_o‖^2`, with fitted
/// slopes for `R_3^4` and each `R_j^2`.
#[derive(Debug, Clone)]
pub struct InteractionSweep {
    pub audits: Vec<InteractionAudit>,
    pub r4: DecayReport,
    pub r2: Vec<DecayReport>,
}

pub fn interaction_sweep(u: &SpectralField, radii: &[f64], kt: &KernelTable) -> Result<InteractionSweep> {
    let audits = radii
        .iter()
        .map(|&r| interaction_audit(u, r, kt))
        .collect::<Result<Vec<_>>>()?;
    let report = |label: String, pick: &dyn Fn(&InteractionAudit) -> f64| {
        let rows = audits
            .iter()
            .map(|a| {
                let bound_unit = a.radius.powi(-3) * a.mass_w_ii * a.mass_u_o;
                let raw = pick(a).abs();
                let value = if bound_unit > 0.0 { raw / (a.mass_w_ii * a.mass_u_o) } else { 0.0 };
                DecayRow {
                    radius: a.radius,
                    value,
                    bound_unit,
                    ratio: if bound_unit > 0.0 { raw / bound_unit } else { 0.0 },
                }
            })
            .collect();
        DecayReport::from_rows(label, rows)
    };
    let r4 = report("cross_riesz4_3".into(), &|a| a.r4_cross)?;
    let r2 = Axis::ALL
        .iter()
        .map(|&ax| report(format!("cross_riesz2_{}", ax.index() + 1), &|a| a.r2_cross[ax.index()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(InteractionSweep { audits, r4, r2 })
}
