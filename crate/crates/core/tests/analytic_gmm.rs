use proptest::prelude::*;

use siforecast::analytic_gmm::{gmm_drift, gmm_marginal, gmm_score, posterior_weights, AnalyticGmmDrift, GmmFn, GmmSpec};
use siforecast::field::DriftField;
use siforecast::interpolant::{draw, MeanEstimate, SamplePair};
use siforecast::rng::{normal_vec, Streams};
use siforecast::schedules::Schedule;

fn spec2() -> GmmSpec {
    GmmSpec::new(
        vec![0.2, 0.5, 0.3],
        vec![vec![-2.0, 0.0], vec![1.0, 1.0], vec![0.5, -1.5]],
        vec![vec![0.4, 0.1, 0.1, 0.2], vec![0.3, 0.0, 0.0, 0.5], vec![0.6, -0.2, -0.2, 0.3]],
    )
    .unwrap()
}

fn permuted(spec: &GmmSpec, order: &[usize]) -> GmmSpec {
    GmmSpec::new(
        order.iter().map(|&j| spec.weights()[j]).collect(),
        order.iter().map(|&j| spec.means()[j].clone()).collect(),
        order.iter().map(|&j| spec.covariances()[j].clone()).collect(),
    )
    .unwrap()
}

#[test]
fn marginal_moments_match_interpolant_draws() {
    let spec = spec2();
    let x0 = [0.4, -0.7];
    for sched in [Schedule::linear(0.8).unwrap(), Schedule::quadratic(1.2).unwrap()] {
        for s in [0.2, 0.6, 0.9] {
            let m = gmm_marginal(&spec, &sched, s, &x0).unwrap();
            let (mu, cov) = (m.mean(), m.covariance());
            let mut rng = Streams::new(3, "mc").stream((s * 100.0) as u64);
            let n = 40_000;
            let draws: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let pair = SamplePair::new(x0.to_vec(), spec.sample(&mut rng)).unwrap();
                    draw(&sched, &pair, s, &normal_vec(&mut rng, 2)).unwrap().i
                })
                .collect();
            for j in 0..2 {
                let col: Vec<f64> = draws.iter().map(|v| v[j]).collect();
                let e = MeanEstimate::from_samples(&col);
                assert!((e.mean - mu[j]).abs() < 4.0 * e.std_error, "mean {j} at s={s}");
                let sq: Vec<f64> = draws.iter().map(|v| (v[j] - mu[j]).powi(2)).collect();
                let e = MeanEstimate::from_samples(&sq);
                assert!((e.mean - cov[3 * j]).abs() < 4.0 * e.std_error, "var {j} at s={s}");
            }
        }
    }
}

#[test]
fn drift_is_conditional_expectation_of_the_target() {
    // E[R | I] via binning a 1-D interpolant against the analytic drift
    let spec = GmmSpec::new(vec![0.4, 0.6], vec![vec![-1.0], vec![1.5]], vec![vec![0.2], vec![0.3]]).unwrap();
    let sched = Schedule::linear(1.0).unwrap();
    let (s, x0) = (0.5, [0.3]);
    let mut rng = Streams::new(4, "cond").stream(0);
    let (lo, hi) = (0.3, 0.4);
    let mut rs = Vec::new();
    let mut is = Vec::new();
    while rs.len() < 20_000 {
        let pair = SamplePair::new(x0.to_vec(), spec.sample(&mut rng)).unwrap();
        let d = draw(&sched, &pair, s, &normal_vec(&mut rng, 1)).unwrap();
        if d.i[0] >= lo && d.i[0] < hi {
            rs.push(d.r[0]);
            is.push(d.i[0]);
        }
    }
    let e = MeanEstimate::from_samples(&rs);
    let bin: Vec<f64> = is.iter().map(|&x| gmm_drift(&spec, &sched, s, &[x], &x0).unwrap()[0]).collect();
    let want = MeanEstimate::from_samples(&bin).mean;
    assert!((e.mean - want).abs() < 4.0 * e.std_error, "{} vs {want}", e.mean);
}

#[test]
fn x0_dependent_target_uses_its_own_mixture() {
    let sched = Schedule::quadratic(1.0).unwrap();
    let field = AnalyticGmmDrift::new(
        GmmFn::new(1, |x0: &[f64]| GmmSpec::new(vec![1.0], vec![vec![2.0 * x0[0]]], vec![vec![0.5]]).unwrap()),
        sched.clone(),
    );
    for x0 in [-1.0, 0.0, 2.5] {
        let fixed = GmmSpec::new(vec![1.0], vec![vec![2.0 * x0]], vec![vec![0.5]]).unwrap();
        for s in [0.0, 0.3, 1.0] {
            let a = field.drift(s, &[0.7], &[x0]).unwrap();
            let b = gmm_drift(&fixed, &sched, s, &[0.7], &[x0]).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-14);
        }
    }
}

#[test]
fn batch_matches_rows() {
    let spec = spec2();
    let sched = Schedule::linear(0.5).unwrap();
    let field = AnalyticGmmDrift::new(spec, sched);
    let mut rng = Streams::new(1, "b").stream(0);
    let n = 50;
    let s: Vec<f64> = (0..n).map(|k| [0.0, 0.25, 0.25, 0.9, 1.0][k % 5]).collect();
    let xs = normal_vec(&mut rng, 2 * n);
    let x0s = normal_vec(&mut rng, 2 * n);
    let mut out = vec![0.0; 2 * n];
    field.drift_batch(&s, &xs, &x0s, &mut out).unwrap();
    for k in 0..n {
        let one = field.drift(s[k], &xs[2 * k..2 * k + 2], &x0s[2 * k..2 * k + 2]).unwrap();
        assert!((one[0] - out[2 * k]).abs() < 1e-12 && (one[1] - out[2 * k + 1]).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn permuting_components_changes_nothing(s in 0.0f64..=1.0, x in prop::collection::vec(-4.0f64..4.0, 2), x0 in prop::collection::vec(-4.0f64..4.0, 2), quad in any::<bool>()) {
        let sched = if quad { Schedule::quadratic(0.9).unwrap() } else { Schedule::linear(0.9).unwrap() };
        let a = spec2();
        let b = permuted(&a, &[2, 0, 1]);
        let da = gmm_drift(&a, &sched, s, &x, &x0).unwrap();
        let db = gmm_drift(&b, &sched, s, &x, &x0).unwrap();
        for j in 0..2 {
            prop_assert!((da[j] - db[j]).abs() < 1e-10 * (1.0 + da[j].abs()));
        }
        if s > 0.0 {
            let wa = posterior_weights(&a, &sched, s, &x, &x0).unwrap();
            let wb = posterior_weights(&b, &sched, s, &x, &x0).unwrap();
            prop_assert!((wa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (k, &j) in [2usize, 0, 1].iter().enumerate() {
                prop_assert!((wb[k] - wa[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn score_from_drift_matches_direct_score(s in 0.02f64..0.98, x in prop::collection::vec(-3.0f64..3.0, 2), x0 in prop::collection::vec(-3.0f64..3.0, 2), quad in any::<bool>()) {
        let sched = if quad { Schedule::quadratic(1.1).unwrap() } else { Schedule::linear(0.6).unwrap() };
        let spec = spec2();
        let b = gmm_drift(&spec, &sched, s, &x, &x0).unwrap();
        let via = sched.score_from_drift(&b, s, &x, &x0).unwrap();
        let direct = gmm_score(&spec, &sched, s, &x, &x0).unwrap();
        for j in 0..2 {
            prop_assert!((via[j] - direct[j]).abs() < 1e-7 * (1.0 + direct[j].abs()), "{:?} vs {:?}", via, direct);
        }
    }

    #[test]
    fn drift_at_one_is_x_minus_x0(x in prop::collection::vec(-3.0f64..3.0, 2), x0 in prop::collection::vec(-3.0f64..3.0, 2)) {
        // at s = 1 the covariance factor cancels and b = x - x0 whatever the target
        let sched = Schedule::linear(1.0).unwrap();
        let spec = spec2();
        let b = gmm_drift(&spec, &sched, 1.0, &x, &x0).unwrap();
        for j in 0..2 {
            prop_assert!((b[j] - (x[j] - x0[j])).abs() < 1e-12);
        }
    }
}
