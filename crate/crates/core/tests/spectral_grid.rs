mod support;

use std::f64::consts::PI;
use std::sync::Arc;

use gpelab_core::checkpoint::{read_checkpoint, write_checkpoint};
use gpelab_core::{GpeError, Grid3, Representation, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, l: f64) -> Arc<Grid3> {
    Arc::new(Grid3::cube(n, l).unwrap())
}

#[test]
fn construction() {
    let g = Grid3::cube(8, 2.0 * PI).unwrap();
    let mut k: Vec<f64> = g.wavenumbers(0).to_vec();
    assert_eq!(k[..4], [0.0, 1.0, 2.0, 3.0]);
    k.sort_by(f64::total_cmp);
    assert_eq!(k, (-4..4).map(f64::from).collect::<Vec<_>>());

    let g = Grid3::cube(64, 16.0).unwrap();
    assert!((0..3).all(|a| g.dx(a) == 0.25));
    assert_eq!(g, Grid3::cube(64, 16.0).unwrap());

    for (n, l) in [([8, 8, 8], [-1.0, 1.0, 1.0]), ([7, 8, 8], [1.0; 3]), ([8, 6, 8], [1.0; 3]), ([8, 8, 8], [1.0, f64::NAN, 1.0])] {
        assert!(matches!(Grid3::new(n, l), Err(GpeError::InvalidGrid(_))));
    }

    let g = Grid3::new([8, 12, 16], [3.0, 5.0, 7.0]).unwrap();
    assert!(g.dv() > 0.0);
    for a in 0..3 {
        let k = g.wavenumbers(a);
        let n = k.len();
        assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
        for j in 1..n {
            if j != n / 2 {
                assert_eq!(k[j], -k[n - j]);
            }
        }
    }
}

#[test]
fn transforms() {
    let g = grid(16, 2.0 * PI);
    let one = SpectralField::from_real_fn(g.clone(), |_| 1.0);
    let hat = one.forward().unwrap();
    assert_eq!(hat.repr(), Representation::Frequency);
    assert!((hat.values()[0].re - g.len_total() as f64).abs() < 1e-9);
    assert!(hat.values()[1..].iter().all(|v| v.norm() < 1e-9));

    let wave = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, 2.0 * x[0] - 3.0 * x[2]));
    let hat = wave.forward().unwrap();
    let bin = g.index(2, 0, 16 - 3);
    for (i, v) in hat.values().iter().enumerate() {
        if i != bin {
            assert!(v.norm() < 1e-9);
        }
    }
    // nodes start at -L/2, which shifts the phase of the bin
    assert!((hat.values()[bin].norm() - g.len_total() as f64).abs() < 1e-9);

    assert!(matches!(hat.forward(), Err(GpeError::Representation { .. })));
    assert!(wave.inverse().is_err());
    assert!(hat.integrate().is_err());
}

#[test]
fn derivatives() {
    let g = grid(16, 2.0 * PI);
    let e1 = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, x[0]));
    let [d1, d2, d3] = e1.gradient();
    let want = e1.scale_complex(Complex64::i());
    assert!(d1.axpy(-1.0, &want).unwrap().max_abs() < 1e-12);
    assert!(d2.max_abs() < 1e-12 && d3.max_abs() < 1e-12);

    let c = SpectralField::from_real_fn(g.clone(), |_| 3.0);
    assert!(c.laplacian().max_abs() < 1e-12);

    let e12 = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, x[0] + x[1]));
    assert!(e12.laplacian().axpy(2.0, &e12).unwrap().max_abs() < 1e-12);
}

#[test]
fn quadrature() {
    let g = grid(16, 16.0);
    let one = SpectralField::from_real_fn(g.clone(), |_| 1.0);
    assert!((one.integrate().unwrap().re - 4096.0).abs() < 1e-9);

    let g = grid(64, 16.0);
    let u = support::gaussian(&g, PI.powf(-0.75), [1.0; 3], |_| 0.0);
    assert!((u.mass().unwrap() - 1.0).abs() < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = support::band_limited(&g, &mut rng, 10, 5);
    let ff = f.inner(&f).unwrap();
    assert!(ff.re >= 0.0 && ff.im.abs() <= 1e-14 * ff.re);
    let other = support::band_limited(&grid(32, 16.0), &mut rng, 4, 3);
    assert!(matches!(f.inner(&other), Err(GpeError::GridMismatch)));
}

#[test]
fn checkpoint_layout() {
    let g = Arc::new(Grid3::new([8, 10, 12], [1.0, 2.0, 3.5]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = support::band_limited(&g, &mut rng, 6, 3);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &f, 0.75).unwrap();
    assert_eq!(&buf[..4], b"GPE1");
    assert_eq!(buf.len(), 4 + 12 + 32 + 16 * 960);
    assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 10);
    assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 3.5);
    assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), 0.75);
    // x3 fastest: the second payload entry is node (0, 0, 1)
    let second = f64::from_le_bytes(buf[64..72].try_into().unwrap());
    assert_eq!(second, f.values()[g.index(0, 0, 1)].re);

    let (back, t) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(t, 0.75);
    assert_eq!(back.values(), f.values());
    assert_eq!(**back.grid(), *g);

    assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(bad.as_slice()), Err(GpeError::Format(_))));
    let mut long = buf;
    long.push(0);
    assert!(read_checkpoint(long.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_and_plancherel(seed in any::<u64>()) {
        let g = Arc::new(Grid3::new([8, 16, 12], [5.0, 7.0, 3.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = SpectralField::from_fn(g.clone(), |x| {
            Complex64::new((x[0] * 1.3).sin() + x[1] * 0.1, (x[2] * x[0]).cos())
        });
        let f = f.axpy(1.0, &support::band_limited(&g, &mut rng, 12, 3)).unwrap();
        let back = f.forward().unwrap().inverse().unwrap();
        prop_assert!(back.rel_diff(&f) <= 1e-12);

        let m = f.mass().unwrap();
        let hat = f.forward().unwrap();
        let spectral: f64 = hat.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.spectral_weight();
        prop_assert!((spectral - m).abs() <= 1e-12 * m);
        // same statement in the continuous normalization
        let dv_xi = g.dv_xi() * (g.dv() * g.dv());
        let spec2: f64 = hat.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * dv_xi / (2.0 * PI).powi(3);
        prop_assert!((spec2 - m).abs() <= 1e-12 * m);
    }

    #[test]
    fn two_routes_to_kinetic_energy(seed in any::<u64>()) {
        let g = grid(16, 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = support::band_limited(&g, &mut rng, 16, 7);
        let physical: f64 = f
            .gradient()
            .iter()
            .map(|d| d.mass().unwrap())
            .sum();
        let t = f.kinetic();
        prop_assert!((physical - t).abs() <= 1e-10 * t);
    }

    #[test]
    fn plane_wave_derivatives_are_exact(m1 in -7i32..8, m2 in -7i32..8, m3 in -7i32..8) {
        let g = grid(16, 4.0);
        let k = [m1, m2, m3].map(|m| 2.0 * PI * m as f64 / 4.0);
        let w = SpectralField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]));
        let grad = w.gradient();
        for a in 0..3 {
            let want = w.scale_complex(Complex64::new(0.0, k[a]));
            prop_assert!(grad[a].axpy(-1.0, &want).unwrap().max_abs() <= 1e-12 * (1.0 + k[a].abs()));
        }
    }
}
