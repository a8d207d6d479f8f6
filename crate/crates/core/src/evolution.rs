//! Strang-split time stepping for `i u_t + (1/2) Delta u = N(u) u` with
//! `N(u) = lambda1 |u|^2 + lambda2 K * |u|^2`.
//!
//! The free flow is diagonal in frequency space and the nonlinear flow is a
//! pointwise phase rotation (it leaves `|u|`, hence `N(u)`, unchanged), so
//! both substeps are exact and unitary.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{GpeError, Result};
use crate::field::{weighted_sum, SpectralField};
use crate::functionals::{evaluate, mean_field, CouplingParams, FunctionalReport};
use crate::grid::Grid3;
use crate::kernel::KernelTable;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between diagnostic rows.
    pub output_every: usize,
    /// Collapse once `||u||_{H1dot}` reaches this multiple of its initial value.
    pub blowup_h1_factor: f64,
    /// Share of `T` in the top octave of wavenumbers that flags
    /// under-resolution.
    pub spectral_tail_fraction: f64,
    pub dt_floor: f64,
    /// Single-step relative energy drift above which `dt` is halved.
    pub energy_drift_tol: f64,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            output_every: 10,
            blowup_h1_factor: 10.0,
            spectral_tail_fraction: 0.05,
            dt_floor: dt / 1024.0,
            energy_drift_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GpeError::InvalidArgument(m));
        if !(self.dt_floor > 0.0 && self.dt > self.dt_floor) {
            return bad(format!("need dt > dt_floor > 0, got dt = {}, dt_floor = {}", self.dt, self.dt_floor));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1".into());
        }
        if !(self.blowup_h1_factor > 1.0) {
            return bad(format!("blowup_h1_factor must exceed 1, got {}", self.blowup_h1_factor));
        }
        if !(self.spectral_tail_fraction > 0.0 && self.spectral_tail_fraction < 1.0) {
            return bad(format!(
                "spectral_tail_fraction must lie in (0, 1), got {}",
                self.spectral_tail_fraction
            ));
        }
        if !(self.energy_drift_tol > 0.0) {
            return bad("energy_drift_tol must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Reached `t_end`.
    Completed,
    /// `||u||_{H1dot}` crossed the collapse threshold while resolved.
    Collapsed,
    /// The grid ran out of resolution before either of the above.
    UnderResolved,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::Collapsed => "collapsed",
            Status::UnderResolved => "under_resolved",
        }
    }
}

/// One time sample. The virial columns are filled by monitors, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub report: FunctionalReport,
    pub virial: Option<f64>,
    pub virial_dt: Option<f64>,
    pub rhs_full: Option<f64>,
    pub remainder: Option<f64>,
}

impl DiagnosticsRow {
    pub fn new(t: f64, report: FunctionalReport) -> Self {
        Self {
            t,
            report,
            virial: None,
            virial_dt: None,
            rhs_full: None,
            remainder: None,
        }
    }
}

/// Observer called on every diagnostic row with a read-only snapshot.
pub trait Monitor {
    fn observe(&mut self, u: &SpectralField, row: &mut DiagnosticsRow) -> Result<()>;
}

impl<F> Monitor for F
where
    F: FnMut(&SpectralField, &mut DiagnosticsRow) -> Result<()>,
{
    fn observe(&mut self, u: &SpectralField, row: &mut DiagnosticsRow) -> Result<()> {
        self(u, row)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub rows: Vec<DiagnosticsRow>,
    pub status: Status,
    pub final_field: SpectralField,
    pub steps: usize,
    pub dt_final: f64,
    /// Largest accepted single-step relative energy drift.
    pub max_step_drift: f64,
    /// Steps accepted at `dt_floor` with the drift still above tolerance.
    pub floor_violations: usize,
    /// Last measured share of `T` in the top octave.
    pub tail_fraction: f64,
}

/// Half free flow `exp(-i |k|^2 dt / 4)` for a fixed `dt`, zero on the
/// Nyquist modes.
///
/// The derivative symbol vanishes there, so those modes neither disperse nor
/// carry kinetic energy. Aliased products of the cubic term would pile up in
/// them and feed back into the resolved band; the flow instead lives on their
/// complement.
struct Propagator {
    dt: f64,
    half: Vec<Complex64>,
}

impl Propagator {
    fn new(grid: &Grid3, dt: f64) -> Self {
        let half = grid
            .k_squared()
            .into_iter()
            .zip(grid.nyquist_mask())
            .map(|(k2, nyq)| {
                if nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, -0.25 * k2 * dt)
                }
            })
            .collect();
        Self { dt, half }
    }

    fn step(&self, u: &SpectralField, p: CouplingParams, kt: &KernelTable) -> Result<SpectralField> {
        let u = u.apply_symbol(&self.half);
        let (n, _) = mean_field(&u, p, kt)?;
        let dt = self.dt;
        let u = u.map(|i, v| v * Complex64::from_polar(1.0, -dt * n[i]));
        Ok(u.apply_symbol(&self.half))
    }
}

/// One Strang step of size `dt` (negative `dt` runs backwards).
pub fn step(u: &SpectralField, p: CouplingParams, kt: &KernelTable, dt: f64) -> Result<SpectralField> {
    let u = u.to_physical();
    Propagator::new(u.grid(), dt).step(&u, p, kt)
}

/// Share of `T` carried by modes in the top octave, i.e. with
/// `max_a |k_a| / k_{N,a} > 1/2`.
pub fn spectral_tail(u: &SpectralField) -> f64 {
    let g = u.grid();
    let hat = u.to_frequency();
    let k2 = g.k_squared();
    let n = g.n();
    let outer = |j: usize, n: usize| {
        let m = if j <= n / 2 { j } else { n - j };
        2 * m > n / 2
    };
    let total = weighted_sum(hat.values(), |i, v| k2[i] * v.norm_sqr());
    if total == 0.0 {
        return 0.0;
    }
    let top = weighted_sum(hat.values(), |i, v| {
        let [a, b, c] = g.unravel(i);
        if outer(a, n[0]) || outer(b, n[1]) || outer(c, n[2]) {
            k2[i] * v.norm_sqr()
        } else {
            0.0
        }
    });
    top / total
}

/// Integrates from `u0` until `t_end`, collapse or under-resolution.
/// Monitors see every `output_every`-th step plus the first and last state.
pub fn evolve(
    u0: &SpectralField,
    p: CouplingParams,
    kt: &KernelTable,
    cfg: &EvolveConfig,
    monitors: &mut [&mut dyn Monitor],
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let mut u = u0.to_physical();
    let grid = u.grid().clone();
    let r0 = evaluate(&u, p, kt)?;
    if !r0.energy.is_finite() {
        return Err(GpeError::Numerical("initial data are not finite".into()));
    }
    let h1_0 = r0.kinetic.sqrt();
    // scale for relative drift; the floor keeps E(u0) = 0 usable
    let e_scale = r0.energy.abs().max(1e-12 * r0.kinetic);

    let mut rows = Vec::new();
    push_row(&mut rows, &u, 0.0, r0, monitors)?;

    let mut t = 0.0;
    let mut dt = cfg.dt;
    let mut prop = Propagator::new(&grid, dt);
    let mut e_prev = r0.energy;
    let mut steps = 0usize;
    let mut max_drift = 0.0_f64;
    let mut floor_violations = 0usize;
    let mut tail = spectral_tail(&u);
    let mut status = Status::Completed;
    let mut last = (r0, true);

    while cfg.t_end - t > 1e-12 * cfg.t_end {
        let h = dt.min(cfg.t_end - t);
        if h != prop.dt {
            prop = Propagator::new(&grid, h);
        }
        let trial = prop.step(&u, p, kt)?;
        let r = evaluate(&trial, p, kt)?;
        if !(r.energy.is_finite() && r.mass.is_finite()) {
            return Err(GpeError::Numerical(format!("non-finite field at t = {t:.6e}, dt = {h:.3e}")));
        }
        let drift = (r.energy - e_prev).abs() / e_scale;
        if drift > cfg.energy_drift_tol && dt > cfg.dt_floor {
            dt = (0.5 * dt).max(cfg.dt_floor);
            continue;
        }
        if drift > cfg.energy_drift_tol {
            floor_violations += 1;
        }
        max_drift = max_drift.max(drift);
        u = trial;
        t += h;
        steps += 1;
        e_prev = r.energy;

        let collapsed = r.kinetic.sqrt() >= cfg.blowup_h1_factor * h1_0;
        tail = spectral_tail(&u);
        // a resolved threshold crossing counts as collapse; otherwise the
        // grid gave out first
        if tail > cfg.spectral_tail_fraction {
            status = Status::UnderResolved;
        } else if collapsed {
            status = Status::Collapsed;
        }
        let stop = status != Status::Completed;
        let due = steps % cfg.output_every == 0;
        last = (r, due || stop);
        if due || stop {
            push_row(&mut rows, &u, t, r, monitors)?;
        }
        if stop {
            break;
        }
    }
    if !last.1 {
        push_row(&mut rows, &u, t, last.0, monitors)?;
    }
    Ok(TrajectoryLog {
        rows,
        status,
        final_field: u,
        steps,
        dt_final: dt,
        max_step_drift: max_drift,
        floor_violations,
        tail_fraction: tail,
    })
}

fn push_row(
    rows: &mut Vec<DiagnosticsRow>,
    u: &SpectralField,
    t: f64,
    r: FunctionalReport,
    monitors: &mut [&mut dyn Monitor],
) -> Result<()> {
    let mut row = DiagnosticsRow::new(t, r);
    for m in monitors.iter_mut() {
        m.observe(u, &mut row)?;
    }
    rows.push(row);
    Ok(())
}

/// `A exp(-(x1^2 + x2^2) / (2 sp^2) - (x3 - o)^2 / (2 s3^2))`.
pub fn make_cylindrical_data(
    grid: Arc<Grid3>,
    amplitude: f64,
    sigma_perp: f64,
    sigma3: f64,
    offset3: f64,
) -> Result<SpectralField> {
    let dx = [0, 1, 2].map(|a| grid.dx(a));
    if !(sigma_perp > 0.0 && sigma3 > 0.0) {
        return Err(GpeError::InvalidArgument(format!(
            "widths must be positive, got ({sigma_perp}, {sigma3})"
        )));
    }
    if sigma_perp < 4.0 * dx[0].max(dx[1]) || sigma3 < 4.0 * dx[2] {
        return Err(GpeError::InvalidArgument(format!(
            "widths ({sigma_perp}, {sigma3}) span fewer than 4 cells (dx = {dx:?})"
        )));
    }
    Ok(SpectralField::from_real_fn(grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let z = x[2] - offset3;
        amplitude * (-r2 / (2.0 * sigma_perp * sigma_perp) - z * z / (2.0 * sigma3 * sigma3)).exp()
    }))
}
