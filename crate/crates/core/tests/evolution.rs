use std::f64::consts::PI;
use std::sync::Arc;

use gpelab_core::evolution::*;
use gpelab_core::functionals::{evaluate, CouplingParams};
use gpelab_core::{Grid3, KernelTable, SpectralField};
use num_complex::Complex64;

fn setup(n: usize, l: f64) -> (Arc<Grid3>, KernelTable) {
    let grid = Arc::new(Grid3::cube(n, l).unwrap());
    let kt = KernelTable::build(grid.clone());
    (grid, kt)
}

fn gaussian(grid: &Arc<Grid3>, amp: f64, s: [f64; 3]) -> SpectralField {
    SpectralField::from_fn(grid.clone(), |x| {
        let e: f64 = (0..3).map(|a| x[a] * x[a] / (2.0 * s[a] * s[a])).sum();
        // a mild phase keeps the flow away from a fixed point
        Complex64::from_polar(amp * (-e).exp(), 0.3 * x[0] - 0.2 * x[1] * x[2])
    })
}

fn run(u: &SpectralField, p: CouplingParams, kt: &KernelTable, dt: f64, t_end: f64) -> TrajectoryLog {
    let mut cfg = EvolveConfig::new(dt, t_end);
    cfg.output_every = 50;
    evolve(u, p, kt, &cfg, &mut []).unwrap()
}

#[test]
fn free_flow_keeps_kinetic_energy() {
    let (grid, kt) = setup(32, 12.0);
    let p = CouplingParams::new(0.0, 0.0).unwrap();
    let u = gaussian(&grid, 1.0, [1.0, 1.2, 0.9]);
    let t0 = u.kinetic();
    let mut v = u.clone();
    for _ in 0..20 {
        v = step(&v, p, &kt, 0.01).unwrap();
    }
    assert!((v.kinetic() - t0).abs() <= 1e-12 * t0);
}

#[test]
fn strang_local_error_is_third_order() {
    let (grid, kt) = setup(32, 12.0);
    let p = CouplingParams::new(1.0, 1.0).unwrap();
    let u = gaussian(&grid, 1.2, [1.0, 1.1, 1.3]);
    let defect = |dt: f64| {
        let one = step(&u, p, &kt, dt).unwrap();
        let two = step(&step(&u, p, &kt, 0.5 * dt).unwrap(), p, &kt, 0.5 * dt).unwrap();
        one.axpy(-1.0, &two).unwrap().norm_l2().unwrap()
    };
    let d: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&h| defect(h)).collect();
    for w in d.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 2.8, "observed order {order}");
    }
}

#[test]
fn conservation_and_reversal() {
    // at 32^3 the phase chirp aliases enough into the dropped Nyquist modes
    // to cost ~1e-10 of mass per unit time
    let (grid, kt) = setup(48, 12.0);
    for (l1, l2, amp) in [(1.0, 0.0, 0.3), (1.0, 1.0, 0.8)] {
        let p = CouplingParams::new(l1, l2).unwrap();
        // the flow projects out the Nyquist modes, so reversal is exact
        // only on data without them
        let keep: Vec<Complex64> = grid
            .nyquist_mask()
            .iter()
            .map(|&m| Complex64::new(if m { 0.0 } else { 1.0 }, 0.0))
            .collect();
        let u0 = gaussian(&grid, amp, [1.0, 1.0, 1.3]).apply_symbol(&keep).to_physical();
        let log = run(&u0, p, &kt, 1e-3, 1.0);
        assert_eq!(log.status, Status::Completed);
        let (first, last) = (log.rows[0].report, log.rows.last().unwrap().report);
        assert!((last.mass - first.mass).abs() <= 1e-10 * first.mass);
        assert!((last.energy - first.energy).abs() <= 1e-6 * first.energy.abs());
        assert!(log.rows.windows(2).all(|w| w[0].t < w[1].t));

        // conjugation reverses time for the split flow
        let back = log.final_field.map(|_, v| v.conj());
        let log2 = run(&back, p, &kt, 1e-3, 1.0);
        let returned = log2.final_field.map(|_, v| v.conj());
        assert!(returned.rel_diff(&u0) <= 1e-10, "{}", returned.rel_diff(&u0));
    }
}

#[test]
fn translation_commutes_with_evolution() {
    let (grid, kt) = setup(32, 12.0);
    let p = CouplingParams::new(-1.0, 0.5).unwrap();
    let u0 = gaussian(&grid, 0.7, [1.0, 0.8, 1.2]);
    let shift = [3, -2, 5];
    let a = run(&u0, p, &kt, 2e-3, 0.2).final_field.roll(shift).unwrap();
    let b = run(&u0.roll(shift).unwrap(), p, &kt, 2e-3, 0.2).final_field;
    assert!(a.rel_diff(&b) <= 1e-12, "{}", a.rel_diff(&b));
}

#[test]
fn cylindrical_data() {
    let (grid, kt) = setup(48, 16.0);
    let (sp, s3) = (1.4, 1.6);
    let amp = (PI.powf(1.5) * sp * sp * s3).powf(-0.5);
    let u = make_cylindrical_data(grid.clone(), amp, sp, s3, 0.0).unwrap();
    assert!((u.mass().unwrap() - 1.0).abs() < 1e-10);
    let n = grid.n()[0];
    let half = n / 2;
    // (x1, x2) -> (-x2, x1) maps node j to 2 * half - j
    for (i1, i2, i3) in [(3, 7, 5), (10, 20, 0), (17, 4, 30)] {
        let a = u.values()[grid.index(i1, i2, i3)];
        let b = u.values()[grid.index((2 * half - i2) % n, i1, i3)];
        assert!((a - b).norm() <= 1e-15);
    }
    let iso = make_cylindrical_data(grid.clone(), 1.0, 1.5, 1.5, 0.0).unwrap();
    let r = evaluate(&iso, CouplingParams::new(0.0, 1.0).unwrap(), &kt).unwrap();
    assert!(r.dipolar.abs() <= 1e-8 * r.l4norm4);
    assert!(make_cylindrical_data(grid, 1.0, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn collapse_or_exhaustion_is_reported() {
    let (grid, kt) = setup(32, 12.0);
    let p = CouplingParams::new(-1.0, 0.0).unwrap();
    let u0 = gaussian(&grid, 3.0, [1.0, 1.0, 1.0]);
    let r = evaluate(&u0, p, &kt).unwrap();
    assert!(r.g < 0.0);
    let mut cfg = EvolveConfig::new(1e-3, 2.0);
    cfg.output_every = 20;
    let log = evolve(&u0, p, &kt, &cfg, &mut []).unwrap();
    assert_ne!(log.status, Status::Completed);
    let last = log.rows.last().unwrap();
    assert!(last.report.kinetic > r.kinetic);
}

#[test]
fn monitors_see_every_row() {
    let (grid, kt) = setup(16, 8.0);
    let p = CouplingParams::new(1.0, 0.0).unwrap();
    let u0 = gaussian(&grid, 0.5, [1.0, 1.0, 1.0]);
    let mut seen = 0usize;
    let mut count = |_: &SpectralField, row: &mut DiagnosticsRow| {
        seen += 1;
        row.virial = Some(row.t);
        Ok(())
    };
    let mut cfg = EvolveConfig::new(1e-2, 0.25);
    cfg.output_every = 5;
    let log = evolve(&u0, p, &kt, &cfg, &mut [&mut count]).unwrap();
    assert_eq!(seen, log.rows.len());
    assert!(log.rows.iter().all(|r| r.virial == Some(r.t)));
    assert!((log.rows.last().unwrap().t - 0.25).abs() < 1e-12);
}
