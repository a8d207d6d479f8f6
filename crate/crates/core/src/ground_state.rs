//! Ground states by preconditioned descent on the Weinstein quotient, the
//! mountain-pass level `gamma(c)`, and the variational checks built on the
//! dilation family.
//!
//! A minimizer `v` of `J` solves the stationary equation after the
//! amplitude rescaling `Q = beta v` with `beta^2 = -2 T(v) / (3 P(v))`, and
//! `Q_mu = mu Q(mu x)` then reaches any requested mass. For `Q` one has
//! `G(Q) = 0`, `E(Q) = T(Q)/6` and `kappa = -(T/2 + P)/M`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{GpeError, Result};
use crate::field::{weighted_sum, SpectralField};
use crate::functionals::{
    classify_regime, dilate, dilate_onto_grid, evaluate, mean_field, CouplingParams, FunctionalReport, Regime,
};
use crate::grid::Grid3;
use crate::kernel::KernelTable;

#[derive(Debug, Clone)]
pub struct GroundStateOptions {
    pub max_iter: usize,
    /// Relative change of `J` regarded as stagnation.
    pub j_tol: f64,
    /// Consecutive stagnating steps required.
    pub stagnation_steps: usize,
    /// Bound on `||-Delta Q/2 + N(Q) Q + kappa Q|| / ||Q||`.
    pub residual_tol: f64,
    pub initial_step: f64,
    /// Backtracking factor of the line search.
    pub armijo: f64,
    /// Widths of the Gaussian initial guess (transverse, along `x3`).
    pub sigma_perp: f64,
    pub sigma3: f64,
    /// Limit on the scale corrections between descent phases.
    pub max_scale_moves: usize,
    pub initial: Option<SpectralField>,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            j_tol: 1e-10,
            stagnation_steps: 20,
            residual_tol: 1e-5,
            initial_step: 0.1,
            armijo: 0.5,
            sigma_perp: 1.0,
            sigma3: 1.0,
            max_scale_moves: 12,
            initial: None,
        }
    }
}

impl GroundStateOptions {
    /// Initial guess elongated along the dipole axis when `lambda2 > 0`.
    pub fn for_params(p: CouplingParams) -> Self {
        let mut o = Self::default();
        if p.lambda2 > 0.0 {
            o.sigma3 = 2.0 * o.sigma_perp;
        }
        o
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub q: SpectralField,
    pub report: FunctionalReport,
    pub kappa: f64,
    pub gamma_c: f64,
    /// Dilation `mu` taking the minimizer found on the grid to this mass.
    pub mu_used: f64,
    pub params: CouplingParams,
    pub weinstein: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `J` after every accepted descent step, one list per pinned-scale
    /// phase.
    pub j_history: Vec<Vec<f64>>,
}

impl GroundStateResult {
    /// `gamma(c) = E(Q_mu)` with `mu = M(Q)/c`.
    pub fn gamma(&self, c: f64) -> Result<f64> {
        if !(c.is_finite() && c > 0.0) {
            return Err(GpeError::InvalidArgument(format!("mass must be positive, got {c}")));
        }
        Ok(self.report.mass * self.report.energy / c)
    }

    /// `Q_mu(x) = mu Q(mu x)` on the same grid.
    pub fn q_mu(&self, mu: f64) -> Result<SpectralField> {
        Ok(dilate(&self.q, [mu; 3])?.scale(mu))
    }

    /// `Q_mu` realized exactly on the grid with lengths `L / mu`.
    pub fn q_mu_rescaled_grid(&self, mu: f64) -> Result<SpectralField> {
        dilate_onto_grid(&self.q, mu, mu)
    }

    /// The member of the `Q_mu` family with mass `c`, with every invariant
    /// re-evaluated on the grid.
    pub fn at_mass(&self, c: f64, kt: &KernelTable) -> Result<GroundStateResult> {
        if !(c.is_finite() && c > 0.0) {
            return Err(GpeError::InvalidArgument(format!("mass must be positive, got {c}")));
        }
        let mu = self.report.mass / c;
        let q = if mu == 1.0 { self.q.clone() } else { self.q_mu(mu)? };
        build_result(q, self.mu_used * mu, self.params, kt, self.iterations, self.j_history.clone())
    }

    /// Text sidecar with the invariants of `Q`.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let r = &self.report;
        writeln!(f, "# ground state invariants")?;
        for (k, v) in [
            ("lambda1", self.params.lambda1),
            ("lambda2", self.params.lambda2),
            ("kappa", self.kappa),
            ("gamma_c", self.gamma_c),
            ("M", r.mass),
            ("E", r.energy),
            ("T", r.kinetic),
            ("P", r.potential),
            ("G", r.g),
        ] {
            writeln!(f, "{k} = {v:?}")?;
        }
        Ok(())
    }
}

/// Value of `log J` with the pieces of its gradient.
struct Probe {
    report: FunctionalReport,
    log_j: f64,
    minus_lap: SpectralField,
    nv: SpectralField,
}

fn probe(v: &SpectralField, p: CouplingParams, kt: &KernelTable, full: bool) -> Result<Option<Probe>> {
    let report = evaluate(v, p, kt)?;
    let Ok(j) = report.weinstein() else {
        return Ok(None);
    };
    if !full {
        return Ok(Some(Probe {
            report,
            log_j: j.ln(),
            minus_lap: SpectralField::zeros(v.grid().clone()),
            nv: SpectralField::zeros(v.grid().clone()),
        }));
    }
    let minus_lap = v.laplacian().scale(-1.0);
    let (n, _) = mean_field(v, p, kt)?;
    let nv = v.map(|i, x| x * n[i]);
    Ok(Some(Probe {
        report,
        log_j: j.ln(),
        minus_lap,
        nv,
    }))
}

fn gaussian_guess(grid: &Arc<Grid3>, sp: f64, s3: f64) -> SpectralField {
    SpectralField::from_real_fn(grid.clone(), |x| {
        (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sp * sp) - x[2] * x[2] / (2.0 * s3 * s3)).exp()
    })
}

/// `Re <f, g>` in physical space.
fn re_inner(f: &SpectralField, g: &SpectralField) -> f64 {
    let prod: Vec<Complex64> = f
        .values()
        .par_iter()
        .zip(g.values().par_iter())
        .map(|(a, b)| a * b.conj())
        .collect();
    weighted_sum(&prod, |_, v| v.re) * f.grid().dv()
}

/// Minimizes the Weinstein quotient and returns the Pohozaev-normalized
/// profile (`G(Q) = 0`) at the length scale preferred by the grid; its mass
/// is whatever that scale implies.
///
/// On a grid `J` is dilation invariant only up to discretization error, and
/// along the dilation orbit it has a maximum (narrow fields lose resolution,
/// wide ones feel the box). The descent therefore runs in phases at a pinned
/// `T/M`, and between phases the scale is moved by a secant step on the
/// Lagrange multiplier of that constraint until the unconstrained gradient
/// vanishes.
pub fn minimize_weinstein(
    p: CouplingParams,
    grid: Arc<Grid3>,
    kt: &KernelTable,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult> {
    if classify_regime(p) == Regime::Stable {
        return Err(GpeError::StableRegime {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
        });
    }
    // Nyquist modes cost no kinetic energy, so any content there would be
    // amplified for free; the descent lives on the complement.
    let keep: Vec<Complex64> = grid
        .nyquist_mask()
        .iter()
        .map(|&nyq| Complex64::new(if nyq { 0.0 } else { 1.0 }, 0.0))
        .collect();
    let v0 = match &opts.initial {
        Some(u) => u.to_physical(),
        None => gaussian_guess(&grid, opts.sigma_perp, opts.sigma3),
    };
    let mut v = v0.apply_symbol(&keep);
    if evaluate(&v, p, kt)?.potential >= 0.0 {
        return Err(GpeError::NonAdmissible(
            "initial guess has non-negative potential energy".into(),
        ));
    }
    let mut phases = Vec::new();
    let mut used = 0usize;
    let mut prev: Option<(f64, f64)> = None;
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_scale_moves {
        let phase = descend(v, p, kt, opts, &keep, opts.max_iter - used)?;
        used += phase.iterations;
        phases.push(phase.history);
        v = phase.v;
        last = phase.proxy;
        if phase.proxy < opts.residual_tol {
            return finish(v, p, kt, used, phases);
        }
        let r = evaluate(&v, p, kt)?;
        let x = (r.kinetic / r.mass).ln();
        let c = phase.multiplier;
        let mut dx = match prev {
            Some((xp, cp)) if (c - cp).abs() > 0.0 => -c * (x - xp) / (c - cp),
            _ => 0.1 * c.signum(),
        };
        dx = dx.clamp(-0.3, 0.3);
        prev = Some((x, c));
        let alpha = (0.5 * dx).exp();
        v = dilate(&v, [alpha; 3])?.apply_symbol(&keep);
    }
    Err(GpeError::NotConverged {
        iterations: used,
        detail: format!("residual proxy {last:.3e} after {} scale moves", opts.max_scale_moves),
    })
}

/// Ground state at mass `c`: the Weinstein minimizer mapped onto `Q_mu =
/// mu Q(mu x)` with `M(Q_mu) = c`.
pub fn solve_ground_state(
    p: CouplingParams,
    c: f64,
    grid: Arc<Grid3>,
    kt: &KernelTable,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult> {
    if !(c.is_finite() && c > 0.0) {
        return Err(GpeError::InvalidArgument(format!("mass must be positive, got {c}")));
    }
    minimize_weinstein(p, grid, kt, opts)?.at_mass(c, kt)
}

struct Phase {
    v: SpectralField,
    proxy: f64,
    multiplier: f64,
    iterations: usize,
    history: Vec<f64>,
}

/// Preconditioned descent on `log J` with `M` and, to first order, `T/M`
/// held fixed. Stops once `J` stagnates or no descent step is found.
fn descend(
    mut v: SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    opts: &GroundStateOptions,
    keep: &[Complex64],
    budget: usize,
) -> Result<Phase> {
    let m0 = v.mass()?;
    let k2 = v.grid().k_squared();
    let mut cur = probe(&v, p, kt, true)?.ok_or_else(|| {
        GpeError::NonAdmissible("field has non-negative potential energy".into())
    })?;
    let mut history = vec![cur.log_j.exp()];
    let mut step = opts.initial_step;
    let mut stagnant = 0usize;

    for iter in 0..budget {
        let r = cur.report;
        let grad = cur
            .minus_lap
            .scale(3.0 / r.kinetic)
            .axpy(1.0 / r.mass, &v)?
            .axpy(-4.0 / r.potential, &cur.nv)?;
        let proxy = (r.kinetic / 6.0) * grad.apply_symbol(keep).norm_l2()? / v.norm_l2()?;

        // (T/6)(kappa - Delta/2)^{-1}: Newton-like near the minimizer
        let kappa_v = r.kinetic / (6.0 * r.mass);
        let scale = r.kinetic / 6.0;
        let prec: Vec<Complex64> = k2
            .iter()
            .zip(keep)
            .map(|(k, m)| m * (scale / (kappa_v + 0.5 * k)))
            .collect();
        let dir = grad.apply_symbol(&prec);
        // gradient of T/M, up to a factor 2
        let h = cur
            .minus_lap
            .scale(1.0 / r.mass)
            .axpy(-r.kinetic / (r.mass * r.mass), &v)?;
        let ph = h.apply_symbol(&prec);
        let multiplier = re_inner(&h, &dir) / re_inner(&h, &ph);
        let dir = dir.axpy(-multiplier, &ph)?;
        let slope = re_inner(&grad, &dir);

        if stagnant >= opts.stagnation_steps {
            return Ok(Phase {
                v,
                proxy,
                multiplier,
                iterations: iter,
                history,
            });
        }

        let mut accepted = None;
        let mut s = step;
        while s > MIN_STEP {
            let trial = v.axpy(-s, &dir)?;
            let trial = trial.scale((m0 / trial.mass()?).sqrt());
            if let Some(pr) = probe(&trial, p, kt, false)? {
                if pr.log_j <= cur.log_j - 1e-4 * s * slope {
                    accepted = Some((trial, pr.log_j));
                    break;
                }
            }
            s *= opts.armijo;
        }
        let Some((trial, log_j)) = accepted else {
            // no decrease above roundoff: the constrained problem is solved
            return Ok(Phase {
                v,
                proxy,
                multiplier,
                iterations: iter + 1,
                history,
            });
        };
        stagnant = if cur.log_j - log_j < opts.j_tol { stagnant + 1 } else { 0 };
        v = trial;
        cur = probe(&v, p, kt, true)?.expect("admissible after acceptance");
        history.push(cur.log_j.exp());
        step = (2.0 * s).min(1.0);
    }
    Err(GpeError::NotConverged {
        iterations: budget,
        detail: format!("descent phase did not stagnate; J = {:.12e}", cur.log_j.exp()),
    })
}

const MIN_STEP: f64 = 1e-8;

fn finish(
    v: SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    iterations: usize,
    history: Vec<Vec<f64>>,
) -> Result<GroundStateResult> {
    let r = evaluate(&v, p, kt)?;
    let beta = (-2.0 * r.kinetic / (3.0 * r.potential)).sqrt();
    build_result(v.scale(beta), 1.0, p, kt, iterations, history)
}

fn build_result(
    q: SpectralField,
    mu_used: f64,
    p: CouplingParams,
    kt: &KernelTable,
    iterations: usize,
    j_history: Vec<Vec<f64>>,
) -> Result<GroundStateResult> {
    let report = evaluate(&q, p, kt)?;
    let kappa = -(0.5 * report.kinetic + report.potential) / report.mass;
    let residual = stationary_residual(&q, p, kt, kappa)?;
    Ok(GroundStateResult {
        weinstein: report.weinstein()?,
        gamma_c: report.energy,
        q,
        report,
        kappa,
        mu_used,
        params: p,
        residual,
        iterations,
        j_history,
    })
}

/// `||-Delta Q/2 + lambda1 |Q|^2 Q + lambda2 (K * |Q|^2) Q + kappa Q|| / ||Q||`
/// over the modes the grid differentiates; Nyquist modes, where `Delta`
/// vanishes by convention, are excluded.
pub fn stationary_residual(q: &SpectralField, p: CouplingParams, kt: &KernelTable, kappa: f64) -> Result<f64> {
    let (n, _) = mean_field(q, p, kt)?;
    let lap = q.laplacian();
    let r = q.map(|i, x| x * (n[i] + kappa)).axpy(-0.5, &lap)?;
    let keep: Vec<Complex64> = q
        .grid()
        .nyquist_mask()
        .iter()
        .map(|&nyq| Complex64::new(if nyq { 0.0 } else { 1.0 }, 0.0))
        .collect();
    Ok(r.apply_symbol(&keep).norm_l2()? / q.norm_l2()?)
}

#[derive(Debug, Clone)]
pub struct GrowthSample {
    pub mu: f64,
    pub g: f64,
    pub energy: f64,
    /// Centered difference of `mu -> E(u^mu)` minus `G(u^mu)/mu`.
    pub derivative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub mu_tilde: f64,
    pub mu_tilde_bisection: f64,
    /// `G(u^mu) > 0` below `mu_tilde` and `< 0` above it at every sample.
    pub sign_pattern_ok: bool,
    /// `mu_tilde < 1` exactly when `G(u) < 0`.
    pub position_ok: bool,
    /// `E(u^mu) < E(u^mu_tilde)` at every sample away from `mu_tilde`.
    pub maximum_ok: bool,
    pub max_derivative_error: f64,
    pub samples: Vec<GrowthSample>,
}

/// Locates `mu_tilde = -2T/(3P)` where `mu -> E(u^mu)` peaks and checks the
/// shape of the dilation curve at `mus`. Every `u^mu` is evaluated on the
/// grid rescaled by `1/mu`, where it is represented exactly.
pub fn check_growth_curve(
    u: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    mus: &[f64],
) -> Result<GrowthReport> {
    let r = evaluate(u, p, kt)?;
    growth_curve(&r, mus, |mu| {
        let v = dilate_onto_grid(u, mu, mu.powf(1.5))?;
        let k = kt.on_rescaled_grid(v.grid().clone())?;
        let rv = evaluate(&v, p, &k)?;
        Ok((rv.energy, rv.g))
    })
}

/// [`check_growth_curve`] with `E(u^mu)` and `G(u^mu)` from the scaling laws
/// applied to one report.
pub fn growth_from_report(r: &FunctionalReport, mus: &[f64]) -> Result<GrowthReport> {
    growth_curve(r, mus, |mu| Ok((r.energy_scaled(mu), r.g_scaled(mu))))
}

fn growth_curve(
    r: &FunctionalReport,
    mus: &[f64],
    eg: impl Fn(f64) -> Result<(f64, f64)>,
) -> Result<GrowthReport> {
    if r.potential >= 0.0 {
        return Err(GpeError::NonAdmissible(format!(
            "potential energy {} is not negative",
            r.potential
        )));
    }
    let mu_tilde = -2.0 * r.kinetic / (3.0 * r.potential);
    let mu_tilde_bisection = bisect_log(|m| Ok(eg(m)?.1), 1e-6, 1e6)?;
    let e_peak = eg(mu_tilde)?.0;
    let mut sign_pattern_ok = true;
    let mut maximum_ok = true;
    let mut max_err = 0.0_f64;
    let mut samples = Vec::with_capacity(mus.len());
    for &mu in mus {
        let (energy, g) = eg(mu)?;
        if (mu - mu_tilde).abs() > 1e-9 * mu_tilde {
            sign_pattern_ok &= if mu < mu_tilde { g > 0.0 } else { g < 0.0 };
            maximum_ok &= energy < e_peak;
        }
        let h = 1e-4 * mu;
        let fd = (eg(mu + h)?.0 - eg(mu - h)?.0) / (2.0 * h);
        // relative to the size of the terms that cancel in G
        let err = (fd - g / mu).abs() / (mu * r.kinetic);
        max_err = max_err.max(err);
        samples.push(GrowthSample {
            mu,
            g,
            energy,
            derivative_error: err,
        });
    }
    let position_ok = (mu_tilde < 1.0) == (r.g < 0.0);
    Ok(GrowthReport {
        mu_tilde,
        mu_tilde_bisection,
        sign_pattern_ok,
        position_ok,
        maximum_ok,
        max_derivative_error: max_err,
        samples,
    })
}

/// Sign change of `f` on `[lo, hi]` (positive at `lo`), bisected in `log mu`.
fn bisect_log(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        if f(m.exp())? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Relative closeness below which an inequality is treated as an equality.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DichotomyReport {
    pub mass_energy: f64,
    pub mass_energy_q: f64,
    pub norm_product: f64,
    pub norm_product_q: f64,
    pub g: f64,
    /// `E(u0) < gamma(M(u0))`.
    pub below_threshold: bool,
    pub g_positive: bool,
    pub mass_energy_below: bool,
    pub norm_product_below: bool,
    pub norm_product_above: bool,
    /// Some compared quantity sits within [`BOUNDARY_TOL`] of equality.
    pub boundary: bool,
    /// The equivalence relevant to the sign of `G` holds.
    pub equivalence_holds: bool,
}

impl DichotomyReport {
    pub fn side(&self) -> DichotomySide {
        if self.boundary {
            DichotomySide::Boundary
        } else if !self.below_threshold {
            DichotomySide::AboveThreshold
        } else if self.g_positive {
            DichotomySide::Scattering
        } else {
            DichotomySide::BlowUp
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DichotomySide {
    Scattering,
    BlowUp,
    AboveThreshold,
    Boundary,
}

impl DichotomySide {
    pub fn label(self) -> &'static str {
        match self {
            DichotomySide::Scattering => "scatter-side",
            DichotomySide::BlowUp => "blow-up-side",
            DichotomySide::AboveThreshold => "above-threshold",
            DichotomySide::Boundary => "boundary",
        }
    }
}

pub fn check_dichotomy(
    u0: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    gs: &GroundStateResult,
) -> Result<DichotomyReport> {
    if gs.params != p {
        return Err(GpeError::InvalidArgument(
            "ground state computed for different couplings".into(),
        ));
    }
    let r = evaluate(u0, p, kt)?;
    Ok(dichotomy_from_reports(&r, &gs.report, gs.gamma(r.mass.max(f64::MIN_POSITIVE))?))
}

pub fn dichotomy_from_reports(r: &FunctionalReport, q: &FunctionalReport, gamma: f64) -> DichotomyReport {
    let me = r.mass * r.energy;
    let me_q = q.mass * q.energy;
    let np = (r.mass * r.kinetic).sqrt();
    let np_q = (q.mass * q.kinetic).sqrt();
    let close = |a: f64, b: f64| (a - b).abs() <= BOUNDARY_TOL * a.abs().max(b.abs());
    let boundary = close(r.energy, gamma) || close(me, me_q) || close(np, np_q) || r.g.abs() <= BOUNDARY_TOL * r.kinetic;
    let below_threshold = r.energy < gamma;
    let g_positive = r.g > 0.0;
    let mass_energy_below = me < me_q;
    let norm_product_below = np < np_q;
    let norm_product_above = np > np_q;
    let equivalence_holds = if g_positive {
        (below_threshold && g_positive) == (mass_energy_below && norm_product_below)
    } else {
        (below_threshold && !g_positive) == (mass_energy_below && norm_product_above)
    };
    DichotomyReport {
        mass_energy: me,
        mass_energy_q: me_q,
        norm_product: np,
        norm_product_q: np_q,
        g: r.g,
        below_threshold,
        g_positive,
        mass_energy_below,
        norm_product_below,
        norm_product_above,
        boundary,
        equivalence_holds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub g: f64,
    pub h1dot: f64,
    /// `-G / ||u||^2`, bounded below along blow-up-side trajectories.
    pub ratio: f64,
    /// `T(u) - 6 E(u0)`, positive along blow-up-side trajectories.
    pub kinetic_margin: f64,
    /// Initial data satisfy `E(u0) < gamma` and `G(u0) < 0`.
    pub precondition: bool,
}

pub fn monitor_below_threshold(
    u: &SpectralField,
    u0_report: &FunctionalReport,
    gamma_c: f64,
    p: CouplingParams,
    kt: &KernelTable,
) -> Result<MonitorRow> {
    let r = evaluate(u, p, kt)?;
    Ok(monitor_from_report(&r, u0_report, gamma_c))
}

pub fn monitor_from_report(r: &FunctionalReport, u0: &FunctionalReport, gamma_c: f64) -> MonitorRow {
    MonitorRow {
        g: r.g,
        h1dot: r.h1dot,
        ratio: -r.g / r.h1dot,
        kinetic_margin: r.kinetic - 6.0 * u0.energy,
        precondition: u0.energy < gamma_c && u0.g < 0.0,
    }
}
