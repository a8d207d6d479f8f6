use std::sync::Arc;

use gpelab_core::kernel::{Axis, KernelTable, Symbol};
use gpelab_core::riesz_lab::*;
use gpelab_core::{Grid3, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WINDOW: (f64, f64) = (-3.5, -2.5);

fn in_window(r: &DecayReport) -> bool {
    r.fit.slope >= WINDOW.0 && r.fit.slope <= WINDOW.1
}

fn ratio_spread(r: &DecayReport) -> f64 {
    let min = r.rows.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
    r.constant / min
}

fn sweep_grid() -> Arc<Grid3> {
    Arc::new(Grid3::cube(128, 32.0).unwrap())
}

#[test]
fn pair_geometry() {
    let grid = Arc::new(Grid3::cube(64, 16.0).unwrap());
    let p = make_pair(grid.clone(), 4.0, 1.0, 2.0, PairShape::default()).unwrap();
    assert_eq!(p.separation(), 1.0);
    let (f_in, g_out) = p.support_leaks().unwrap();
    assert!(f_in <= 1e-12 && g_out <= 1e-12);
    assert!(make_pair(grid.clone(), 4.0, 1.5, 1.5, PairShape::default()).is_err());
    assert!(make_pair(grid.clone(), 5.0, 1.0, 2.0, PairShape::default()).is_err());

    let u = SpectralField::from_fn(grid, |x| Complex64::new(x[0].cos(), x[1] * x[2]));
    let inside = inside_cylinder(&u, 3.0).unwrap();
    let outside = outside_cylinder(&u, 3.0).unwrap();
    for ((a, b), c) in inside.values().iter().zip(outside.values()).zip(u.values()) {
        assert_eq!(a + b, *c);
    }
}

#[test]
fn decay_sweeps_follow_inverse_cube() {
    let grid = sweep_grid();
    let kt = KernelTable::build(grid.clone());
    let radii = [0.5, 1.0, 2.0, 4.0];
    let pairs = make_pairs(grid.clone(), &radii, 1.0, 2.0, PairShape::default()).unwrap();
    for p in &pairs {
        let (f_in, g_out) = p.support_leaks().unwrap();
        assert!(f_in <= 1e-12 && g_out <= 1e-12);
    }

    let r4 = decay_r4(&pairs, &kt, Axis::X3).unwrap();
    assert!(in_window(&r4), "R_3^4 slope {}", r4.fit.slope);
    assert!(ratio_spread(&r4) < 1.5);

    let mixed = decay_mixed_r2r2(&pairs, &kt, Axis::X1, Axis::X3).unwrap();
    let swapped = decay_mixed_r2r2(&pairs, &kt, Axis::X3, Axis::X1).unwrap();
    assert!(in_window(&mixed), "R_1^2 R_3^2 slope {}", mixed.fit.slope);
    for (a, b) in mixed.rows.iter().zip(&swapped.rows) {
        assert!((a.value - b.value).abs() <= 1e-14 * a.value);
    }
    let diag = decay_mixed_r2r2(&pairs, &kt, Axis::X3, Axis::X3).unwrap();
    for (a, b) in diag.rows.iter().zip(&r4.rows) {
        assert!((a.value - b.value).abs() <= 1e-12 * b.value);
    }

    // every zero-degree symbol of the table obeys the same window
    for sym in [
        Symbol::Dipolar,
        Symbol::Riesz2(Axis::X1),
        Symbol::Riesz2(Axis::X3),
        Symbol::Riesz4(Axis::X1),
        Symbol::DipolarDerivative3,
    ] {
        let rep = decay_symbol(&pairs, &kt, sym).unwrap();
        assert!(in_window(&rep), "{} slope {}", rep.label, rep.fit.slope);
        assert!(ratio_spread(&rep) < 2.0, "{}", rep.label);
    }
    // with cylindrical symmetry the (1,2) product mostly cancels; only the
    // uniform bound is meaningful
    let r12 = decay_mixed_r2r2(&pairs, &kt, Axis::X1, Axis::X2).unwrap();
    assert!(r12.constant <= decay_r4(&pairs, &kt, Axis::X1).unwrap().constant * 2.0);

    for dir in [Direction::OuterToInner, Direction::InnerToOuter] {
        for ax in [Axis::X1, Axis::X3] {
            let rep = decay_r2_sweep(&pairs, &kt, ax, dir).unwrap();
            assert!(in_window(&rep), "{} slope {}", rep.label, rep.fit.slope);
            assert!(ratio_spread(&rep) < 1.5);
        }
    }

    // a second source far outside only adds L^1 mass that costs little
    let sweep = decay_r2_sweep(&pairs, &kt, Axis::X1, Direction::OuterToInner).unwrap();
    let p = &pairs[1];
    let sigma = PairShape::default().sigma3 * p.radius;
    let far_f = SpectralField::from_real_fn(grid.clone(), |x| {
        let r = x[0].hypot(x[1]);
        let t = 2.0 * (r - 8.0 * p.radius) / p.radius - 1.0;
        let b = if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
        b * (-0.5 * (x[2] / sigma).powi(2)).exp()
    });
    let combined = p.f.axpy(1.0, &far_f).unwrap();
    let row = pointwise_inside(&combined, p.radius, p.gamma1 * p.radius, &kt, Axis::X1).unwrap();
    assert!(row.value <= sweep.constant * row.bound_unit);

    let zero = SpectralField::zeros(grid);
    let row = pointwise_inside(&zero, 1.0, 1.0, &kt, Axis::X1).unwrap();
    assert_eq!(row.value, 0.0);
}

#[test]
fn riesz4_pairing_with_itself_is_nonnegative() {
    let grid = Arc::new(Grid3::cube(32, 8.0).unwrap());
    let kt = KernelTable::build(grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = SpectralField::from_real_fn(grid.clone(), |x| {
            (-(x[0] - c[0]).powi(2) - (x[1] - c[1]).powi(2) - (x[2] - c[2]).powi(2)).exp() * c[3]
                + (-(x[0] - c[4]).powi(2) - 2.0 * (x[2] - c[5]).powi(2)).exp()
        });
        for ax in Axis::ALL {
            assert!(kt.pairing(&f, &f, Symbol::Riesz4(ax)).unwrap().re >= 0.0);
        }
    }
}

fn band_limited(grid: &Arc<Grid3>, rng: &mut ChaCha8Rng) -> SpectralField {
    let mut hat = SpectralField::zeros(grid.clone()).to_frequency();
    let n = grid.n();
    let wrap = |m: i64, n: usize| m.rem_euclid(n as i64) as usize;
    for _ in 0..24 {
        let m: Vec<i64> = (0..3).map(|_| rng.gen_range(-3..=3)).collect();
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let idx = grid.index(wrap(m[0], n[0]), wrap(m[1], n[1]), wrap(m[2], n[2]));
        hat.values_mut()[idx] += c;
    }
    hat.inverse().unwrap()
}

#[test]
fn biharmonic_representation() {
    let grid = Arc::new(Grid3::cube(32, 16.0).unwrap());
    let kt = KernelTable::build(grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xis = sample_frequencies();
    assert_eq!(xis.len(), 20);
    for ax in Axis::ALL {
        for _ in 0..3 {
            let f = band_limited(&grid, &mut rng);
            let g = band_limited(&grid, &mut rng);
            let rep = biharmonic_check(&kt, &xis, &f, &g, ax).unwrap();
            assert!(rep.max_scalar_error <= 1e-8);
            assert!(rep.truncation_bound < 1e-6);
            assert!(rep.rel_error <= 1e-4, "axis {ax:?}: {}", rep.rel_error);
        }
    }
}

#[test]
fn dilation_identity_on_anisotropic_gaussians() {
    let grid = Arc::new(Grid3::cube(64, 16.0).unwrap());
    let kt = KernelTable::build(grid.clone());
    for (a, c) in [(1.0, 0.6), (0.7, 1.0), (1.2, 0.5)] {
        let f = SpectralField::from_real_fn(grid.clone(), |x| {
            (-(x[0] * x[0] + x[1] * x[1]) / (a * a) - x[2] * x[2] / (c * c)).exp()
        });
        let s = dilation_identity(&f, &kt).unwrap();
        assert!(s.symbol_route.abs() > 1e-3);
        assert!(s.rel_error() <= 1e-3, "{a} {c}: {s:?}");
    }
}

#[test]
fn interaction_audit_identities() {
    let grid = sweep_grid();
    let kt = KernelTable::build(grid.clone());
    let u = SpectralField::from_real_fn(grid.clone(), |x| {
        (-2.0 * (x[0] * x[0] + x[1] * x[1]) - x[2] * x[2] / (2.0 * 0.75 * 0.75)).exp()
    });
    let a = interaction_audit(&u, 0.25, &kt).unwrap();
    assert!(a.outer_outer.rel_error() <= 1e-3, "{:?}", a.outer_outer);
    assert!(a.inner_outer.rel_error() <= 1e-3, "{:?}", a.inner_outer);
    assert!(interaction_audit(&u, 4.0, &kt).is_err());

    // everything inside R/20: nothing outside 4R to interact with
    let thin = inside_cylinder(&u, 0.25 / 20.0).unwrap();
    let a = interaction_audit(&thin, 0.25, &kt).unwrap();
    assert_eq!(a.mass_u_o, 0.0);
    assert_eq!(a.r4_cross, 0.0);
    assert_eq!(a.r2_cross, [0.0; 3]);
}

#[test]
fn interaction_cross_terms_decay() {
    let grid = sweep_grid();
    let kt = KernelTable::build(grid.clone());
    // power-law tail so the outer piece always sits near 4R; thin in x3
    let u = SpectralField::from_real_fn(grid.clone(), |x| {
        (-0.5 * (x[2] / 0.25).powi(2)).exp() / (1.0 + x[0] * x[0] + x[1] * x[1])
    });
    let sweep = interaction_sweep(&u, &[0.25, 0.5, 1.0, 2.0], &kt).unwrap();
    assert!(in_window(&sweep.r4), "R_3^4 cross slope {}", sweep.r4.fit.slope);
    for r in &sweep.r2 {
        assert!(in_window(r), "{} slope {}", r.label, r.fit.slope);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_identity_anywhere(
        x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0, j in 1usize..=3,
    ) {
        prop_assume!(x * x + y * y + z * z > 1e-2);
        let s = biharmonic_scalar([x, y, z], Axis::from_number(j).unwrap()).unwrap();
        prop_assert!((s.quadrature - s.exact).abs() <= 1e-8);
    }

    #[test]
    fn cylinder_masks_partition(r in 0.1f64..6.0) {
        let grid = Arc::new(Grid3::cube(16, 12.0).unwrap());
        let u = SpectralField::from_real_fn(grid, |x| 1.0 + x[0] - x[1] * x[2]);
        let a = inside_cylinder(&u, r).unwrap();
        let b = outside_cylinder(&u, r).unwrap();
        let sum = a.axpy(1.0, &b).unwrap();
        prop_assert_eq!(sum.values(), u.values());
    }
}
