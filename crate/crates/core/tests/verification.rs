use pvcast::verify::{
    crps, deterministic_scores, interval_scores, rank_histogram, EnsembleSample, ScoreAccumulator, STRATUM_ALL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Integral of (F(z) − 1{y ≤ z})² over the real line, summed exactly over the
/// intervals where both step functions are constant.
fn crps_by_integration(members: &[f64], y: f64) -> f64 {
    let e = members.len() as f64;
    let mut knots: Vec<f64> = members.to_vec();
    knots.push(y);
    knots.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let z = 0.5 * (w[0] + w[1]);
        let f = members.iter().filter(|&&x| x <= z).count() as f64 / e;
        let h = if y <= z { 1.0 } else { 0.0 };
        total += (f - h).powi(2) * (w[1] - w[0]);
    }
    total
}

/// Probability that an exchangeable observation falls inside the interval
/// spanned by linearly interpolated order statistics at positions
/// `alpha/2·(E−1)` and `(1−alpha/2)·(E−1)`. For uniform draws, the k-th of E
/// order statistics (1-based) has expectation k/(E+1), and coverage is the
/// expected upper bound minus the expected lower bound.
fn effective_coverage(e: usize, alpha: f64) -> f64 {
    let expected_at = |h: f64| {
        let lo = h.floor();
        let k = lo + 1.0;
        let a = k / (e as f64 + 1.0);
        let b = ((k + 1.0).min(e as f64)) / (e as f64 + 1.0);
        a + (h - lo) * (b - a)
    };
    let n = (e - 1) as f64;
    expected_at((1.0 - alpha / 2.0) * n) - expected_at(alpha / 2.0 * n)
}

fn sample(members: Vec<f64>, y: f64, f: f64) -> EnsembleSample {
    EnsembleSample::new(members, y, f).unwrap()
}

fn ensemble_strategy() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (prop::collection::vec(-50.0f64..50.0, 1..=16), -60.0f64..60.0, 0.1f64..10.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn closed_form_crps_matches_integral((members, y, f) in ensemble_strategy()) {
        let oracle = crps_by_integration(&members, y) / f;
        let got = crps(&sample(members, y, f));
        prop_assert!((got - oracle).abs() <= 1e-6 * oracle.abs().max(1e-9), "{got} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn single_member_crps_is_mae(x in -50.0f64..50.0, y in -50.0f64..50.0, f in 0.1f64..10.0) {
        let s = sample(vec![x], y, f);
        prop_assert_eq!(crps(&s), deterministic_scores(&[s]).unwrap().nmae);
    }

    #[test]
    fn error_norm_ordering(set in prop::collection::vec(ensemble_strategy(), 1..40)) {
        let samples: Vec<_> = set.into_iter().map(|(m, y, f)| sample(m, y, f)).collect();
        let d = deterministic_scores(&samples).unwrap();
        prop_assert!(d.nrmse + 1e-12 >= d.nmae);
        prop_assert!(d.nmae + 1e-12 >= d.nmbe.abs());
    }

    #[test]
    fn scores_are_scale_equivariant(
        set in prop::collection::vec((prop::collection::vec(-50.0f64..50.0, 2..=12), -60.0f64..60.0, 0.1f64..10.0), 1..30),
        c in 1e-3f64..1e3,
    ) {
        let base: Vec<_> = set.iter().map(|(m, y, f)| sample(m.clone(), *y, *f)).collect();
        let scaled: Vec<_> = set.iter().map(|(m, y, f)| sample(m.iter().map(|x| x * c).collect(), y * c, f * c)).collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        let (d0, d1) = (deterministic_scores(&base).unwrap(), deterministic_scores(&scaled).unwrap());
        prop_assert!(close(d0.nmae, d1.nmae) && close(d0.nrmse, d1.nrmse) && close(d0.nmbe, d1.nmbe));
        let (i0, i1) = (interval_scores(&base, 0.1).unwrap(), interval_scores(&scaled, 0.1).unwrap());
        prop_assert!(close(i0.pinaw, i1.pinaw));
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!(close(crps(a), crps(b)));
        }
    }

    #[test]
    fn sign_flip_negates_bias(set in prop::collection::vec(ensemble_strategy(), 1..20)) {
        let a: Vec<_> = set.iter().map(|(m, y, f)| sample(m.clone(), *y, *f)).collect();
        let b: Vec<_> = set.iter().map(|(m, y, f)| sample(m.iter().map(|x| -x).collect(), -y, *f)).collect();
        let (da, db) = (deterministic_scores(&a).unwrap(), deterministic_scores(&b).unwrap());
        prop_assert!((da.nmbe + db.nmbe).abs() < 1e-9);
        prop_assert!((da.nmae - db.nmae).abs() < 1e-9 && (da.nrmse - db.nrmse).abs() < 1e-9);
    }
}

#[test]
fn two_member_example_matches_integral() {
    assert!((crps_by_integration(&[0.0, 2.0], 1.0) - 0.5).abs() < 1e-15);
    assert!((crps(&sample(vec![0.0, 2.0], 1.0, 1.0)) - 0.5).abs() < 1e-15);
}

#[test]
fn calibrated_ensemble_coverage() {
    let alpha = 0.1;
    let target = effective_coverage(10, alpha);
    assert!((target - (1.0 - 2.9 / 11.0)).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = Normal::new(0.3, 2.0).unwrap();
    let samples: Vec<_> = (0..100_000)
        .map(|_| {
            let m: Vec<f64> = (0..10).map(|_| normal.sample(&mut rng)).collect();
            sample(m, normal.sample(&mut rng), 1.0)
        })
        .collect();
    let picp = interval_scores(&samples, alpha).unwrap().picp;
    assert!((picp - target).abs() <= 0.03, "picp {picp} vs effective {target}");
}

#[test]
fn exchangeable_rank_histogram_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<_> = (0..10_000)
        .map(|_| {
            let m: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            sample(m, rng.random::<f64>(), 1.0)
        })
        .collect();
    let h = rank_histogram(&samples, 0).unwrap();
    assert_eq!(h.counts.len(), 10);
    assert!(h.p_value > 0.01, "p = {} counts {:?}", h.p_value, h.counts);

    // Discrete values produce ties; tie-breaking must keep the histogram flat.
    let tied: Vec<_> = (0..10_000)
        .map(|_| {
            let m: Vec<f64> = (0..9).map(|_| rng.random_range(0..4) as f64).collect();
            sample(m, rng.random_range(0..4) as f64, 1.0)
        })
        .collect();
    assert!(rank_histogram(&tied, 0).unwrap().p_value > 0.01);
}

#[test]
fn accumulator_matches_direct_scores_for_one_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<_> = (0..500)
        .map(|_| {
            let m: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            sample(m, rng.random::<f64>(), 0.8)
        })
        .collect();
    let mut acc = ScoreAccumulator::new(0.1).unwrap();
    samples.iter().for_each(|s| acc.add("m", 15, STRATUM_ALL, 0, s));
    let table = acc.finish();
    let cell = table.get("m", 15, STRATUM_ALL).unwrap();
    let d = deterministic_scores(&samples).unwrap();
    let i = interval_scores(&samples, 0.1).unwrap();
    let mean_crps = samples.iter().map(crps).sum::<f64>() / samples.len() as f64;
    for (a, b) in [(cell.nmae, d.nmae), (cell.nrmse, d.nrmse), (cell.nmbe, d.nmbe), (cell.ncrps, mean_crps)] {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(cell.picp, Some(i.picp));
    assert!((cell.pinaw.unwrap() - i.pinaw).abs() < 1e-12);
}
