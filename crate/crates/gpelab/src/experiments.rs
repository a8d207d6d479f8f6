//! The named experiments: each wires core modules together and writes its
//! artifacts into the output directory.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gpelab_core::checkpoint;
use gpelab_core::evolution::{evolve, make_cylindrical_data, DiagnosticsRow, Monitor, Status};
use gpelab_core::functionals::{evaluate, CouplingParams};
use gpelab_core::ground_state::{check_dichotomy, minimize_weinstein, GroundStateResult};
use gpelab_core::riesz_lab::{decay_r2_sweep, decay_symbol, make_pairs, DecayReport};
use gpelab_core::virial::{outer_mass_fraction, remainder_scaling, virial_row_with, CutoffProfile, VirialMonitor, VirialWeight};
use gpelab_core::{Grid3, KernelTable, SpectralField, Symbol};

use crate::config::{Estimate, Expect, InitialBlock, RunConfig, Shape};
use crate::output::{Cell, CsvSink, Report};
use crate::RunError;

pub const EVOLVE_COLUMNS: [&str; 13] = [
    "t", "M", "E", "T", "P", "G", "h1dot", "l4norm4", "dipolar", "V", "dVdt", "rhs_full", "remainder",
];

/// What a finished experiment reports back to the runner.
pub struct Finished {
    /// Terminal status written to the manifest.
    pub status: String,
    pub expectation: Result<(), String>,
}

impl Finished {
    fn ok(status: &str) -> Self {
        Self {
            status: status.to_string(),
            expectation: Ok(()),
        }
    }
}

type Progress<'a> = &'a dyn Fn(&str);

fn couplings(cfg: &RunConfig) -> CouplingParams {
    cfg.couplings.expect("parse_config guarantees couplings for this experiment")
}

fn ground_state(cfg: &RunConfig, grid: &Arc<Grid3>, kt: &KernelTable, say: Progress) -> Result<GroundStateResult, RunError> {
    let p = couplings(cfg);
    say("minimizing the Weinstein functional");
    let gs = minimize_weinstein(p, grid.clone(), kt, &cfg.groundstate.options(p))?;
    let gs = match cfg.groundstate.mass {
        Some(c) => gs.at_mass(c, kt)?,
        None => gs,
    };
    say(&format!(
        "ground state: M = {}, kappa = {}, residual = {:e}",
        gs.report.mass, gs.kappa, gs.residual
    ));
    Ok(gs)
}

/// Smooth periodic phase from a few seeded low modes.
fn phase_field(grid: &Grid3, seed: u64, amplitude: f64) -> Vec<f64> {
    const MODES: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.lengths();
    let modes: Vec<([f64; 3], f64, f64)> = (0..MODES)
        .map(|_| {
            let mut m = [0i32; 3];
            while m == [0; 3] {
                m = [0, 1, 2].map(|_| rng.gen_range(-2..=2));
            }
            let k = [0, 1, 2].map(|a| 2.0 * PI * m[a] as f64 / l[a]);
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let norm = amplitude / (MODES as f64).sqrt();
    grid.positions()
        .iter()
        .map(|x| {
            norm * modes
                .iter()
                .map(|(k, c, ph)| c * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + ph).cos())
                .sum::<f64>()
        })
        .collect()
}

fn initial_field(
    cfg: &RunConfig,
    block: &InitialBlock,
    grid: &Arc<Grid3>,
    kt: &KernelTable,
    report: &mut Report,
    say: Progress,
) -> Result<SpectralField, RunError> {
    let mut u = match block.shape {
        Shape::Gaussian => make_cylindrical_data(grid.clone(), block.amplitude, block.sigma_perp, block.sigma3, block.offset3)?,
        Shape::GroundState => {
            let gs = ground_state(cfg, grid, kt, say)?;
            report.heading("ground state");
            report.line("kappa", gs.kappa);
            report.line("gamma_c", gs.gamma_c);
            report.line("residual", gs.residual);
            let shift = (block.offset3 / grid.dx(2)).round() as isize;
            gs.q.to_physical().scale(block.amplitude).roll([0, 0, shift])?
        }
    };
    if block.phase_noise != 0.0 {
        let theta = phase_field(grid, cfg.seed, block.phase_noise);
        for (v, th) in u.values_mut().iter_mut().zip(theta) {
            *v *= Complex64::from_polar(1.0, th);
        }
    }
    Ok(u)
}

pub fn run_evolve(cfg: &RunConfig, dir: &Path, say: Progress) -> Result<(Finished, Report), RunError> {
    let block = cfg.evolve.as_ref().expect("evolve section");
    let init = cfg.initial.as_ref().expect("initial section");
    let p = couplings(cfg);
    let grid = Arc::new(cfg.grid.clone());
    let kt = KernelTable::build(grid.clone());
    let mut report = Report::default();
    let u0 = initial_field(cfg, init, &grid, &kt, &mut report, say)?;

    let mut virial = match cfg.virial.as_ref().and_then(|v| v.radius.map(|r| (r, v.include_x3))) {
        Some((radius, include_x3)) => Some(VirialMonitor {
            weight: VirialWeight::cutoff(&CutoffProfile::build(radius, grid.clone())?, include_x3),
            params: p,
            kernel: &kt,
        }),
        None => None,
    };

    let comment = format!(
        "evolve lambda1={} lambda2={} dt={} t_end={}; virial columns empty without virial.R",
        p.lambda1, p.lambda2, block.config.dt, block.config.t_end
    );
    let mut csv = CsvSink::create(&dir.join("diagnostics.csv"), &comment, &EVOLVE_COLUMNS)?;
    let rows_per_checkpoint = block.checkpoint_every / block.config.output_every;
    let mut rows_seen = 0usize;
    let prefix = dir.join(&cfg.checkpoint_prefix);
    let mut sink = |u: &SpectralField, row: &mut DiagnosticsRow| -> gpelab_core::Result<()> {
        let r = row.report;
        csv.row(&[
            Cell::F(row.t),
            Cell::F(r.mass),
            Cell::F(r.energy),
            Cell::F(r.kinetic),
            Cell::F(r.potential),
            Cell::F(r.g),
            Cell::F(r.h1dot),
            Cell::F(r.l4norm4),
            Cell::F(r.dipolar),
            Cell::Opt(row.virial),
            Cell::Opt(row.virial_dt),
            Cell::Opt(row.rhs_full),
            Cell::Opt(row.remainder),
        ])?;
        if rows_per_checkpoint > 0 && rows_seen > 0 && rows_seen % rows_per_checkpoint == 0 {
            let step = rows_seen * block.config.output_every;
            checkpoint::save(format!("{}_{step:08}.gpe", prefix.display()), u, row.t)?;
        }
        rows_seen += 1;
        Ok(())
    };
    let mut monitors: Vec<&mut dyn Monitor> = Vec::new();
    if let Some(v) = virial.as_mut() {
        monitors.push(v);
    }
    monitors.push(&mut sink);

    say("evolving");
    let log = evolve(&u0, p, &kt, &block.config, &mut monitors)?;
    let t_final = log.rows.last().map_or(0.0, |r| r.t);
    checkpoint::save(format!("{}_final.gpe", prefix.display()), &log.final_field, t_final)?;

    let (first, last) = (log.rows[0].report, log.rows[log.rows.len() - 1].report);
    report.heading("evolution");
    report.line("status", log.status.label());
    report.line("t_final", t_final);
    report.line("steps", log.steps);
    report.line("dt_final", log.dt_final);
    report.line("max_step_energy_drift", log.max_step_drift);
    report.line("floor_violations", log.floor_violations);
    report.line("tail_fraction", log.tail_fraction);
    report.line("mass_drift", (last.mass - first.mass) / first.mass);
    report.line("energy_drift", (last.energy - first.energy) / first.energy.abs().max(1e-300));
    report.line("h1dot_ratio", (last.h1dot / first.h1dot).sqrt());

    let expectation = match (block.expect, log.status) {
        (_, Status::UnderResolved) => Err("the grid ran out of resolution".to_string()),
        (Expect::Any, _) | (Expect::Completed, Status::Completed) | (Expect::Collapsed, Status::Collapsed) => Ok(()),
        (want, got) => Err(format!("expected {want:?}, run ended {}", got.label())),
    };
    Ok((
        Finished {
            status: log.status.label().to_string(),
            expectation,
        },
        report,
    ))
}

pub fn run_groundstate(cfg: &RunConfig, dir: &Path, say: Progress) -> Result<(Finished, Report), RunError> {
    let grid = Arc::new(cfg.grid.clone());
    let kt = KernelTable::build(grid.clone());
    let gs = ground_state(cfg, &grid, &kt, say)?;
    checkpoint::save(dir.join(format!("{}_Q.gpe", cfg.checkpoint_prefix)), &gs.q, 0.0)?;
    gs.write_sidecar(dir.join("groundstate.txt"))?;

    let mut report = Report::default();
    report.heading("ground state");
    let r = gs.report;
    for (k, v) in [
        ("M", r.mass),
        ("E", r.energy),
        ("T", r.kinetic),
        ("P", r.potential),
        ("G", r.g),
        ("kappa", gs.kappa),
        ("gamma_c", gs.gamma_c),
        ("weinstein", gs.weinstein),
        ("mu_used", gs.mu_used),
        ("residual", gs.residual),
    ] {
        report.line(k, v);
    }
    report.line("iterations", gs.iterations);
    Ok((Finished::ok("converged"), report))
}

pub fn run_virial_audit(cfg: &RunConfig, dir: &Path, say: Progress) -> Result<(Finished, Report), RunError> {
    let v = cfg.virial.as_ref().expect("virial section");
    let init = cfg.initial.as_ref().expect("initial section");
    let p = couplings(cfg);
    let grid = Arc::new(cfg.grid.clone());
    let kt = KernelTable::build(grid.clone());
    let mut report = Report::default();
    let u = initial_field(cfg, init, &grid, &kt, &mut report, say)?;

    say("remainder sweep");
    let table = remainder_scaling(&u, p, &kt, &v.radii)?;
    let mut csv = CsvSink::create(
        &dir.join("virial_audit.csv"),
        "cutoff virial remainder pieces per radius",
        &["R", "defect_l4", "mass_term", "remainder", "remainder_ratio", "strauss_bound"],
    )?;
    for s in &table.samples {
        csv.row(&[
            Cell::F(s.radius),
            Cell::F(s.defect_l4),
            Cell::F(s.mass_term),
            Cell::F(s.remainder),
            Cell::F(s.remainder_ratio),
            Cell::F(s.strauss_bound),
        ])?;
    }
    for (name, fit) in [
        ("defect_l4", table.defect_fit),
        ("mass_term", table.mass_fit),
        ("remainder", table.remainder_fit),
    ] {
        match fit {
            Some(f) => csv.comment(&format!("slope {name} = {}", f.slope))?,
            None => csv.comment(&format!("slope {name} = none (identically zero)"))?,
        }
    }

    // with the quadratic weight the identity closes on 4G up to box effects
    let quad = virial_row_with(&u, p, &kt, &VirialWeight::quadratic(grid.clone()))?;
    report.heading("quadratic weight");
    report.line("rhs_full", quad.rhs_full);
    report.line("four_g", quad.four_g);
    report.line("relative_gap", (quad.rhs_full - quad.four_g).abs() / quad.four_g.abs().max(1e-300));
    report.line("outer_mass_fraction", outer_mass_fraction(&u)?);
    Ok((Finished::ok("completed"), report))
}

pub fn run_riesz_sweep(cfg: &RunConfig, dir: &Path, say: Progress) -> Result<(Finished, Report), RunError> {
    let rz = cfg.riesz.as_ref().expect("riesz section");
    let grid = Arc::new(cfg.grid.clone());
    let kt = KernelTable::build(grid.clone());
    say("building localized pairs");
    let pairs = make_pairs(grid, &rz.radii, rz.gamma1, rz.gamma2, rz.shape)?;
    let axis = rz.axes[0];
    let decay: DecayReport = match rz.estimate {
        Estimate::R4 => decay_symbol(&pairs, &kt, Symbol::Riesz4(axis))?,
        Estimate::Mixed => decay_symbol(&pairs, &kt, Symbol::Mixed(rz.axes[0], rz.axes[1]))?,
        Estimate::R2Pointwise => decay_r2_sweep(&pairs, &kt, axis, rz.direction)?,
        Estimate::Symbol(s) => decay_symbol(&pairs, &kt, s)?,
    };
    let mut csv = CsvSink::create(
        &dir.join(format!("riesz_{}.csv", decay.label)),
        &format!("{} gamma1={} gamma2={}", decay.label, rz.gamma1, rz.gamma2),
        &["R", "value", "bound", "ratio"],
    )?;
    for r in &decay.rows {
        csv.row(&[Cell::F(r.radius), Cell::F(r.value), Cell::F(r.bound_unit), Cell::F(r.ratio)])?;
    }
    csv.comment(&format!(
        "slope = {} intercept = {} constant = {}",
        decay.fit.slope, decay.fit.intercept, decay.constant
    ))?;
    let mut report = Report::default();
    report.heading(&decay.label);
    report.line("slope", decay.fit.slope);
    report.line("constant", decay.constant);
    Ok((Finished::ok("completed"), report))
}

pub fn run_dichotomy(cfg: &RunConfig, dir: &Path, say: Progress) -> Result<(Finished, Report), RunError> {
    let d = cfg.dichotomy.as_ref().expect("dichotomy section");
    let p = couplings(cfg);
    let grid = Arc::new(cfg.grid.clone());
    let kt = KernelTable::build(grid.clone());
    let gs = ground_state(cfg, &grid, &kt, say)?;

    let mut csv = CsvSink::create(
        &dir.join("dichotomy.csv"),
        "u = A s^1.5 g(s x) for the base Gaussian g; side from the threshold comparison and the sign of G",
        &[
            "A", "s", "M", "E", "T", "G", "gamma", "ME", "ME_Q", "norm_product", "norm_product_Q", "side", "equivalence",
        ],
    )?;
    let (mut counts, mut failures) = ([0usize; 4], 0usize);
    for &a in &d.amplitudes {
        for &s in &d.dilations {
            let u = make_cylindrical_data(grid.clone(), a * s.powf(1.5), d.sigma_perp / s, d.sigma3 / s, 0.0)?;
            let r = evaluate(&u, p, &kt)?;
            let c = check_dichotomy(&u, p, &kt, &gs)?;
            let side = c.side();
            counts[side as usize] += 1;
            if !c.equivalence_holds && !c.boundary {
                failures += 1;
            }
            csv.row(&[
                Cell::F(a),
                Cell::F(s),
                Cell::F(r.mass),
                Cell::F(r.energy),
                Cell::F(r.kinetic),
                Cell::F(r.g),
                Cell::F(gs.gamma(r.mass)?),
                Cell::F(c.mass_energy),
                Cell::F(c.mass_energy_q),
                Cell::F(c.norm_product),
                Cell::F(c.norm_product_q),
                Cell::S(side.label().to_string()),
                Cell::B(c.equivalence_holds),
            ])?;
        }
    }
    let mut report = Report::default();
    report.heading("dichotomy");
    report.line("ground_state_mass", gs.report.mass);
    report.line("scatter_side", counts[0]);
    report.line("blow_up_side", counts[1]);
    report.line("above_threshold", counts[2]);
    report.line("boundary", counts[3]);
    report.line("equivalence_failures", failures);
    let expectation = if failures == 0 {
        Ok(())
    } else {
        Err(format!("{failures} data points violate the threshold equivalence"))
    };
    Ok((
        Finished {
            status: "completed".into(),
            expectation,
        },
        report,
    ))
}
