mod common;

use common::{binomial_se, phi, two_systems};
use metaeval_core::synth::{enumerate_exact, generate};
use metaeval_core::{Decomposer, Estimator, GeneratorConfig, Label, ResamplePlan, Scheme};
use proptest::prelude::*;

fn plan(seed: u64, n: usize) -> ResamplePlan {
    ResamplePlan::new(seed, n, Scheme::JudgmentLevel).unwrap()
}

fn metric() -> Estimator {
    Estimator::Metric("oracle".into())
}

#[test]
fn noise_matches_normal_cdf_for_unit_gap() {
    // delta = 1, total judgment variance 900, 1800 judgments per system
    let cfg = GeneratorConfig {
        system_means: vec![1.0, 0.0],
        segment_std: 20.0,
        judgment_std: 500f64.sqrt(),
        n_segments: 1800,
        exact_moments: true,
        seed: 11,
        ..Default::default()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let d = Decomposer::new(&ds, plan(1, 10_000)).unwrap();
    let noise = d.estimate_noise(0).unwrap();
    assert!((noise - phi(-1.0)).abs() <= 0.012, "noise {noise}");
}

#[test]
fn terms_match_closed_forms() {
    let n = 500;
    let cfg = GeneratorConfig {
        system_means: vec![0.0, 1.0, 2.0, 3.5],
        metric_offsets: vec![0.0, 0.0, -2.5, 0.0],
        n_segments: n,
        exact_moments: true,
        seed: 5,
        ..Default::default()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let d = Decomposer::new(&ds, plan(2, 10_000)).unwrap();
    let res = d.decompose(&metric()).unwrap();
    let mut biased = 0;
    for (i, p) in res.pairs.iter().enumerate() {
        let (a, b) = (d.contexts()[i].pair.index_a, d.contexts()[i].pair.index_b);
        let dmu = cfg.system_means[a] - cfg.system_means[b];
        let dm = dmu + cfg.metric_offsets[a] - cfg.metric_offsets[b];
        let noise = phi(-dmu.abs() / (2.0 * 200.0 / n as f64).sqrt());
        let variance = phi(-dm.abs() * (n as f64).sqrt() / (10.0 * 2f64.sqrt()));
        let bias = u8::from((dm >= 0.0) != (dmu >= 0.0));
        assert!(
            (p.noise - noise).abs() <= 0.015,
            "pair {i} noise {} vs {noise}",
            p.noise
        );
        assert!(
            (p.variance - variance).abs() <= 0.015,
            "pair {i} variance {} vs {variance}",
            p.variance
        );
        assert_eq!(p.bias, bias, "pair {i}");
        biased += usize::from(bias);
    }
    assert!(biased > 0);
}

#[test]
fn convergence_curve_matches_closed_form() {
    let tau = 10.0;
    let cfg = GeneratorConfig {
        system_means: vec![1.0, 0.0],
        segment_std: tau,
        n_segments: 2000,
        exact_moments: true,
        seed: 9,
        ..Default::default()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let d = Decomposer::new(&ds, plan(3, 5_000)).unwrap();
    let grid = [10, 100, 400, 1000, 2000];
    let curve = d.convergence_curve(&metric(), &grid).unwrap();
    for p in &curve {
        let expected = 1.0 - phi(-(p.k as f64).sqrt() / (tau * 2f64.sqrt()));
        assert!(
            (p.agreement - expected).abs() <= 0.02,
            "k={} {} vs {expected}",
            p.k,
            p.agreement
        );
    }
    let last = curve.last().unwrap().agreement;
    assert!(curve
        .iter()
        .all(|p| p.agreement <= last + 2.0 * binomial_se(0.5, 5_000)));
}

#[test]
fn optimal_row_is_the_floor() {
    let cfg = GeneratorConfig {
        system_means: vec![0.0, 0.3, 0.9],
        n_segments: 300,
        seed: 21,
        ..Default::default()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let d = Decomposer::new(&ds, plan(4, 4_000)).unwrap();
    let floor = d.lower_bound().unwrap();
    let opt = d.decompose(&Estimator::Optimal).unwrap();
    assert_eq!(opt.err_obs, floor);
    let m = d.decompose(&metric()).unwrap();
    assert!(m.err_obs >= floor - 3.0 * binomial_se(0.5, 4_000));
    // the optimal label minimises expected 0-1 loss against resampled humans
    assert!(opt.pairs.iter().all(|p| p.noise <= 0.5));
    let human = d.decompose(&Estimator::Human).unwrap();
    assert_eq!(human.bias, 0.0);
}

#[test]
fn monte_carlo_matches_enumeration_on_small_instances() {
    let instances = [
        (
            vec![(vec![3.0, 1.0], 2.0), (vec![2.0], 1.0)],
            vec![(vec![1.0, 2.0], 1.0), (vec![2.0, 2.0], 3.0)],
        ),
        (
            vec![(vec![5.0], 4.0), (vec![1.0, 4.0, 2.0], 0.0), (vec![3.0], 2.0)],
            vec![(vec![2.0, 3.0], 1.0), (vec![4.0], 2.0), (vec![1.0, 5.0], 2.0)],
        ),
    ];
    let n = 100_000;
    for (a, b) in &instances {
        let ds = two_systems(a, b);
        let exact = enumerate_exact(&ds, 0, "m").unwrap();
        assert!(exact.identity_exact);
        assert!(exact.identity_gap() < 1e-12);
        let d = Decomposer::new(&ds, plan(17, n)).unwrap();
        let mc = d.decompose_pair(0, &Estimator::Metric("m".into())).unwrap();
        assert_eq!(mc.optimal_label, exact.optimal_label);
        assert_eq!(mc.main_prediction, exact.main_prediction);
        assert_eq!(mc.bias, exact.bias);
        for (name, got, want) in [
            ("noise", mc.noise, exact.noise),
            ("variance", mc.variance, exact.variance),
            ("err", mc.err_obs, exact.err_obs),
        ] {
            let tol = 3.0 * binomial_se(want, n);
            assert!((got - want).abs() <= tol.max(1e-12), "{name}: {got} vs {want}");
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = GeneratorConfig {
        system_means: vec![0.0, 0.4, 0.8],
        n_segments: 200,
        seed: 2,
        ..Default::default()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                Decomposer::new(&ds, plan(8, 2_000))
                    .unwrap()
                    .decompose(&metric())
                    .unwrap()
            })
    };
    assert_eq!(run(1), run(3));
}

/// Per segment: judgments and the metric score.
type Rows = Vec<(Vec<f64>, f64)>;

fn small_dataset() -> impl Strategy<Value = (Rows, Rows)> {
    let seg = (prop::collection::vec(0u8..=10, 1..=3), 0u8..=10)
        .prop_map(|(js, m)| (js.into_iter().map(f64::from).collect::<Vec<_>>(), f64::from(m)));
    (2usize..=5).prop_flat_map(move |k| {
        (
            prop::collection::vec(seg.clone(), k),
            prop::collection::vec(seg.clone(), k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identity_holds_within_monte_carlo_tolerance((a, b) in small_dataset(), seed in 0u64..1000) {
        let ds = two_systems(&a, &b);
        let d = Decomposer::new(&ds, plan(seed, 4_000)).unwrap();
        let p = d.decompose_pair(0, &Estimator::Metric("m".into())).unwrap();
        for v in [p.noise, p.variance, p.err_obs] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&p.c0));
        prop_assert_eq!(p.c1, if p.bias == 0 { 1 } else { -1 });
    }

    #[test]
    fn swapping_systems_flips_labels((a, b) in small_dataset()) {
        let ds = two_systems(&a, &b);
        let swapped = two_systems(&b, &a);
        let d = Decomposer::new(&ds, plan(1, 10)).unwrap();
        let s = Decomposer::new(&swapped, plan(1, 10)).unwrap();
        let (l, r) = (d.full_human_difference(0).unwrap(), s.full_human_difference(0).unwrap());
        prop_assert!((l.difference + r.difference).abs() < 1e-12);
        if l.difference != 0.0 {
            prop_assert_eq!(l.sign, r.sign.flip());
        } else {
            prop_assert_eq!(l.sign, Label::Positive);
        }
    }
}
