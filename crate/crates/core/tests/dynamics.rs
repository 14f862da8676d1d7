use std::f64::consts::PI;

use proptest::prelude::*;
use rustfft::num_complex::Complex64;

use siforecast::analytic_gmm::GmmSpec;
use siforecast::dynamics::jump::{jump_diffusion_step, nearest_mode, rotate, simulate_jump_diffusion, JumpDiffusionConfig};
use siforecast::dynamics::navier_stokes::{ns_trajectory, rms, simulate_ns, NavierStokesConfig, NsSolver};
use siforecast::dynamics::spectrum::{downsample, enstrophy_spectrum, Fft2};
use siforecast::dynamics::TransitionDataset;
use siforecast::error::Error;
use siforecast::eval::{kde_kl, KdeConfig};
use siforecast::rng::Streams;

fn small_ns() -> NavierStokesConfig {
    NavierStokesConfig {
        n: 32,
        dt: 2e-3,
        snapshot_interval: 0.1,
        seed: 2,
        ..Default::default()
    }
}

#[test]
fn invariant_marginals_match_the_mixture() {
    let cfg = JumpDiffusionConfig {
        chains: 20,
        seed: 1,
        lag: 0.2,
        ..Default::default()
    };
    let ds = simulate_jump_diffusion(&cfg, 100_000, 5.0).unwrap();
    let spec = GmmSpec::five_mode();
    let mut rng = Streams::new(2, "exact").stream(0);
    let exact: Vec<Vec<f64>> = (0..100_000).map(|_| spec.sample(&mut rng)).collect();
    for j in 0..2 {
        let sim: Vec<f64> = (0..ds.len()).map(|k| ds.x0_row(k)[j]).collect();
        let ex: Vec<f64> = exact.iter().map(|v| v[j]).collect();
        let kl = kde_kl(&ex, &sim, &KdeConfig::default(), 0, 0).unwrap();
        assert!(kl.value < 0.01, "coordinate {j}: {}", kl.value);
    }
    // five-fold symmetry of the mode occupation
    let mut counts = [0usize; 5];
    for k in 0..ds.len() {
        let r = ds.x0_row(k);
        counts[nearest_mode(&spec, [r[0], r[1]])] += 1;
    }
    let expected = ds.len() as f64 / 5.0;
    for c in counts {
        assert!((c as f64 - expected).abs() < 0.05 * expected, "{counts:?}");
    }
}

#[test]
fn short_lags_barely_move_and_correlation_decays() {
    let base = JumpDiffusionConfig {
        chains: 4,
        seed: 5,
        ..Default::default()
    };
    let corr = |lag: f64| {
        let ds = simulate_jump_diffusion(&JumpDiffusionConfig { lag, ..base.clone() }, 8000, 5.0).unwrap();
        let a: Vec<f64> = (0..ds.len()).map(|k| ds.x0_row(k)[0]).collect();
        let b: Vec<f64> = (0..ds.len()).map(|k| ds.x1_row(k)[0]).collect();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        cov / (va * vb).sqrt()
    };
    let (c1, c2, c3) = (corr(0.01), corr(0.5), corr(2.0));
    assert!(c1 > 0.9, "{c1}");
    assert!(c1 > c2 && c2 > c3, "{c1} {c2} {c3}");
}

#[test]
fn jump_step_is_seeded() {
    let cfg = JumpDiffusionConfig::default();
    let a = jump_diffusion_step([5.0, 0.0], &cfg, &mut Streams::new(1, "j").stream(0));
    let b = jump_diffusion_step([5.0, 0.0], &cfg, &mut Streams::new(1, "j").stream(0));
    assert_eq!(a, b);
    let r = rotate([1.0, 0.0], 2.0 * PI / 5.0);
    assert!((r[0] - (72f64).to_radians().cos()).abs() < 1e-15);
}

#[test]
fn unforced_single_modes_decay_at_the_linear_rate() {
    let cfg = NavierStokesConfig {
        forcing: 0.0,
        ..small_ns()
    };
    let n = cfg.n;
    let h = 2.0 * PI / n as f64;
    for (kx, ky) in [(1.0, 1.0), (3.0, 0.0), (2.0, -7.0)] {
        let mut solver = NsSolver::new(&cfg).unwrap();
        let field: Vec<f64> = (0..n * n).map(|k| (kx * (k % n) as f64 * h + ky * (k / n) as f64 * h).sin()).collect();
        let mut w = solver.to_spectral(&field);
        let rate = 1.0 - cfg.dt * (cfg.viscosity * (kx * kx + ky * ky) + cfg.damping);
        for step in 1..=10 {
            solver.step_with(&mut w, &[0.0; 8]).unwrap();
            let got = solver.to_physical(&w);
            let f = rate.powi(step);
            for (g, v) in got.iter().zip(&field) {
                assert!((g - f * v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn trajectories_are_bounded_and_reproducible() {
    let cfg = small_ns();
    let a = ns_trajectory(&cfg, 6, 1.0, 0).unwrap();
    let b = ns_trajectory(&cfg, 6, 1.0, 0).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, ns_trajectory(&cfg, 6, 1.0, 1).unwrap());
    for f in &a {
        let m: f64 = f.iter().sum::<f64>() / f.len() as f64;
        assert!(m.abs() < 1e-12);
        assert!(rms(f) > 0.0 && rms(f) < 50.0);
    }
}

#[test]
fn emitted_dataset_has_unit_mean_snapshot_norm() {
    let cfg = NavierStokesConfig {
        trajectories: 3,
        ..small_ns()
    };
    let ds = simulate_ns(&cfg, 5, 0.5).unwrap();
    assert_eq!(ds.len(), 12);
    assert_eq!(ds.dim, 32 * 32);
    assert!(ds.scale > 0.0);
    let mut norms = Vec::new();
    for t in 0..3 {
        for k in 0..4 {
            norms.push(rms(ds.x0_row(4 * t + k)));
        }
        norms.push(rms(ds.x1_row(4 * t + 3)));
        // consecutive pairs chain within a trajectory
        for k in 0..3 {
            assert_eq!(ds.x1_row(4 * t + k), ds.x0_row(4 * t + k + 1));
        }
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_grids_and_blowups_are_reported() {
    for n in [0, 31, 48, 4] {
        assert!(NavierStokesConfig { n, ..small_ns() }.validate().is_err(), "n = {n}");
    }
    assert!(NavierStokesConfig { dt: 0.3, ..small_ns() }.validate().is_err());
    let cfg = small_ns();
    let mut solver = NsSolver::new(&cfg).unwrap();
    let field: Vec<f64> = (0..32 * 32).map(|k| 1e6 * ((k % 32) as f64 * 2.0 * PI / 32.0).sin()).collect();
    let mut w = solver.to_spectral(&field);
    let err = solver.step_with(&mut w, &[0.0; 8]).unwrap_err();
    assert!(matches!(err, Error::BlowUp { .. }));
    assert!(err.is_numerical());
}

#[test]
fn shells_partition_the_enstrophy() {
    let mut rng = Streams::new(3, "f").stream(0);
    let field = siforecast::rng::normal_vec(&mut rng, 16 * 16);
    let total: f64 = enstrophy_spectrum(&field).unwrap().iter().sum();
    // Parseval: sum of |c|^2 equals the mean square
    let ms = field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64;
    assert!((total - ms).abs() < 1e-12);
    assert!(enstrophy_spectrum(&[0.0; 15]).is_err());
    let c = Fft2::new(16).coefficients(&field);
    assert!(c[0].norm() < 1.0);
    assert_eq!(downsample(&field, 16).unwrap().len(), 256);
    let z: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); 4];
    assert_eq!(Fft2::new(2).synthesize(&z), vec![0.0; 4]);
}

#[test]
fn dataset_split_subset_and_shuffle() {
    let x0: Vec<f64> = (0..20).map(|v| v as f64).collect();
    let x1: Vec<f64> = (0..20).map(|v| -(v as f64)).collect();
    let ds = TransitionDataset::new(2, 0.5, x0, x1).unwrap();
    assert_eq!(ds.len(), 10);
    let (tr, va) = ds.split(0.9);
    assert_eq!((tr.len(), va.len()), (9, 1));
    assert_eq!(va.x0_row(0), &[18.0, 19.0]);
    let sub = ds.subset(&[3, 1]);
    assert_eq!(sub.x0, vec![6.0, 7.0, 2.0, 3.0]);
    let sh = ds.shuffled(&Streams::new(0, "s"));
    let mut rows: Vec<f64> = (0..10).map(|k| sh.x0_row(k)[0]).collect();
    rows.sort_by(f64::total_cmp);
    assert_eq!(rows, (0..10).map(|k| 2.0 * k as f64).collect::<Vec<_>>());
    for k in 0..10 {
        assert_eq!(sh.x1_row(k)[0], -sh.x0_row(k)[0]);
    }
    assert!(TransitionDataset::new(2, 0.5, vec![0.0; 4], vec![0.0; 6]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mixture_is_rotation_invariant(x in -8.0f64..8.0, y in -8.0f64..8.0) {
        let spec = GmmSpec::five_mode();
        let r = rotate([x, y], 2.0 * PI / 5.0);
        prop_assert!((spec.log_density(&[x, y]) - spec.log_density(&r)).abs() < 1e-9);
    }

    #[test]
    fn downsampling_a_band_limited_field_is_exact(a in -2.0f64..2.0, b in -2.0f64..2.0, kx in 0i32..4, ky in -3i32..4) {
        let n = 32;
        let f = |m: usize, k: usize| a * (kx as f64 * (k % m) as f64 * 2.0 * PI / m as f64 + ky as f64 * (k / m) as f64 * 2.0 * PI / m as f64).cos()
            + b * ((k / m) as f64 * 2.0 * PI / m as f64).sin();
        let fine: Vec<f64> = (0..n * n).map(|k| f(n, k)).collect();
        let coarse = downsample(&fine, 8).unwrap();
        for (k, v) in coarse.iter().enumerate() {
            prop_assert!((v - f(8, k)).abs() < 1e-10);
        }
    }
}
