use proptest::prelude::*;
use streambench::bench::ClassifierParams;
use streambench::eval::ConfusionState;
use streambench::features::{inject_drift, meanstd_features, window_stream, DriftConfig, RawSample, SampleWindow};
use streambench::mcnn::MicroCluster;
use streambench::{Classifier, GeneratorSpec, HoeffdingParams, HoeffdingTree, Instance, Mcnn, McnnParams, MondrianForest, MondrianParams, NaiveBayes};

const STREAMING: [&str; 6] = ["nb", "ht", "mf", "mcnn-origin", "mcnn-orpaillecc", "fnn"];

fn labelled(dim: usize, k: usize) -> impl Strategy<Value = Vec<Instance>> {
    prop::collection::vec((prop::collection::vec(-5.0..5.0f64, dim), 0..k), 1..300)
        .prop_map(|rows| rows.into_iter().map(|(x, y)| Instance::new(x, y)).collect())
}

fn build(name: &str, dim: usize, k: usize) -> Box<dyn Classifier> {
    let params = match name {
        "mf" => ClassifierParams::parse("mf", "mem_kb=16,budget=5").unwrap(),
        "ht" => ClassifierParams::parse("ht", "grace=20").unwrap(),
        other => ClassifierParams::defaults(other).unwrap(),
    };
    params.build(dim, k, 7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predict_does_not_disturb_training(data in labelled(3, 4)) {
        let probes: Vec<&Instance> = data.iter().step_by(5).collect();
        for name in STREAMING {
            let mut once = build(name, 3, 4);
            let mut twice = build(name, 3, 4);
            for x in &data {
                let a = once.predict(&x.features).unwrap();
                let b = twice.predict(&x.features).unwrap();
                prop_assert_eq!(a, twice.predict(&x.features).unwrap());
                prop_assert_eq!(a, b);
                once.train(x).unwrap();
                twice.train(x).unwrap();
            }
            for p in &probes {
                prop_assert_eq!(once.predict(&p.features).unwrap(), twice.predict(&p.features).unwrap());
            }
            prop_assert_eq!(once.memory_bytes(), twice.memory_bytes());
        }
    }

    #[test]
    fn fused_step_agrees_with_predict_then_train(data in labelled(2, 3)) {
        for name in STREAMING {
            let mut fused = build(name, 2, 3);
            let mut split = build(name, 2, 3);
            for x in &data {
                let expected = split.predict(&x.features).unwrap();
                split.train(x).unwrap();
                prop_assert_eq!(fused.test_then_train(x).unwrap(), expected, "{}", name);
            }
        }
    }

    #[test]
    fn budgets_hold_after_every_train(data in labelled(4, 3), kb in 2usize..20, clusters in 3usize..12) {
        let mf_params = MondrianParams { memory_bytes: kb * 1024, budget: 10.0, ..MondrianParams::default() };
        let mut mf = MondrianForest::new(4, 3, mf_params, 1).unwrap();
        let mc_params = McnnParams { max_clusters: clusters, ..McnnParams::origin() };
        let mut mc = Mcnn::new(4, 3, mc_params).unwrap();
        let mc_cap = clusters * MicroCluster::record_bytes(4);
        for x in &data {
            mf.train(x).unwrap();
            mc.train(x).unwrap();
            prop_assert!(mf.memory_bytes() <= kb * 1024);
            prop_assert!(mc.memory_bytes() <= mc_cap);
            prop_assert!(mc.cluster_count() <= clusters);
        }
    }

    #[test]
    fn wrong_dimensionality_is_rejected(extra in 1usize..4) {
        for name in STREAMING {
            let mut c = build(name, 3, 2);
            let bad = Instance::new(vec![0.5; 3 + extra], 0);
            prop_assert!(c.predict(&bad.features).is_err());
            prop_assert!(c.train(&bad).is_err());
            prop_assert!(c.predict(&[0.5, 0.5]).is_err());
        }
    }

    #[test]
    fn windows_flatten_to_the_kept_prefix(n in 0usize..400, size in 1usize..60) {
        let samples: Vec<RawSample> = (0..n)
            .map(|i| RawSample { axes: vec![i as f64, -(i as f64)], label: i % 3 })
            .collect();
        let windows = window_stream(samples.clone(), size).unwrap();
        prop_assert_eq!(windows.len(), n / size);
        let flat: Vec<f64> = windows.iter().flat_map(|w| w.samples.iter().flatten().copied()).collect();
        let kept: Vec<f64> = samples[..(n / size) * size].iter().flat_map(|s| s.axes.iter().copied()).collect();
        prop_assert_eq!(flat, kept);
    }

    #[test]
    fn meanstd_is_shift_covariant(
        values in prop::collection::vec(-100.0..100.0f64, 2 * 10),
        shift in -50.0..50.0f64,
    ) {
        let window = SampleWindow { samples: values.chunks(2).map(<[f64]>::to_vec).collect(), labels: vec![0; 10] };
        let shifted = SampleWindow {
            samples: values.chunks(2).map(|s| vec![s[0] + shift, s[1]]).collect(),
            labels: vec![0; 10],
        };
        let a = meanstd_features(&window).unwrap().features;
        let b = meanstd_features(&shifted).unwrap().features;
        prop_assert!((b[0] - a[0] - shift).abs() < 1e-9);
        prop_assert!((b[1] - a[1]).abs() < 1e-9);
        prop_assert!((b[2] - a[2]).abs() < 1e-12);
        prop_assert!((b[3] - a[3]).abs() < 1e-12);
    }

    #[test]
    fn drift_twice_is_identity(labels in prop::collection::vec(0usize..5, 2..200), pos in 1usize..200, shift in 1usize..5) {
        let pos = pos % (labels.len() - 1) + 1;
        let stream: Vec<Instance> = labels.iter().map(|&y| Instance::new(vec![0.0], y)).collect();
        let once = inject_drift(stream.clone(), DriftConfig { position: pos, shift }, 5).unwrap();
        let back = inject_drift(once, DriftConfig { position: pos, shift: 5 - shift }, 5).unwrap();
        prop_assert_eq!(back, stream);
    }

    #[test]
    fn naive_bayes_ignores_arrival_order(data in labelled(3, 3), seed in any::<u64>()) {
        let mut shuffled = data.clone();
        shuffled = streambench::features::shuffle_stream(std::mem::take(&mut shuffled), seed);
        let mut a = NaiveBayes::new(3, 3);
        let mut b = NaiveBayes::new(3, 3);
        for x in &data { a.train(x).unwrap(); }
        for x in &shuffled { b.train(x).unwrap(); }
        for c in 0..3 {
            prop_assert_eq!(a.stats().class_count(c), b.stats().class_count(c));
            for f in 0..3 {
                prop_assert!((a.stats().mean(c, f) - b.stats().mean(c, f)).abs() < 1e-9);
                prop_assert!((a.stats().variance(c, f) - b.stats().variance(c, f)).abs() < 1e-9);
            }
        }
        prop_assert_eq!(a.memory_bytes(), NaiveBayes::new(3, 3).memory_bytes());
    }

    #[test]
    fn confusion_rows_balance(log in prop::collection::vec((0usize..4, 0usize..4), 0..300)) {
        let mut cm = ConfusionState::new(4);
        for &(t, p) in &log { cm.record(t, p); }
        let predicted: u64 = (0..4).map(|c| cm.tp(c) + cm.fp(c)).sum();
        let actual: u64 = (0..4).map(|c| cm.tp(c) + cm.fn_count(c)).sum();
        prop_assert_eq!(predicted, log.len() as u64);
        prop_assert_eq!(actual, log.len() as u64);
        for c in 0..4 {
            prop_assert_eq!(cm.tp(c) + cm.fn_count(c), log.iter().filter(|e| e.0 == c).count() as u64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generators_are_deterministic_and_bounded(seed in any::<u64>(), sample in any::<u64>()) {
        for spec in [GeneratorSpec::hyperplane(seed), GeneratorSpec::randomrbf(seed), GeneratorSpec::randomtree(seed)] {
            let spec = spec.with_length(500).with_sample_seed(sample);
            let a = spec.generate().unwrap();
            prop_assert_eq!(&a, &spec.generate().unwrap());
            let (d, k) = (spec.shape.dimensionality, spec.shape.num_classes);
            for x in &a {
                prop_assert_eq!(x.features.len(), d);
                prop_assert!(x.label.unwrap() < k);
                if spec.kind.name() == "randomrbf" {
                    prop_assert!(x.features.iter().all(|v| v.is_finite()));
                } else {
                    prop_assert!(x.features.iter().all(|v| (0.0..1.0).contains(v)));
                }
            }
        }
    }

    #[test]
    fn hoeffding_grows_in_fixed_steps(seed in any::<u64>()) {
        let data = GeneratorSpec::randomtree(seed).with_length(4_000).generate().unwrap();
        let params = HoeffdingParams { grace_period: 50, ..HoeffdingParams::default() };
        let mut ht = HoeffdingTree::new(6, 10, params).unwrap();
        let mut nb = NaiveBayes::new(6, 10);
        let leaf = ht.memory_bytes();
        let mut step = None;
        let mut before = ht.memory_bytes();
        let mut frozen: Vec<(usize, f64)> = Vec::new();
        for x in &data {
            if ht.internal_count() == 0 {
                prop_assert_eq!(ht.predict(&x.features).unwrap(), nb.predict(&x.features).unwrap());
            }
            let internals = ht.internal_count();
            ht.train(x).unwrap();
            nb.train(x).unwrap();
            let after = ht.memory_bytes();
            prop_assert!(after >= before);
            if ht.internal_count() > internals {
                let delta = (after - before) / (ht.internal_count() - internals);
                prop_assert!(delta > 2 * leaf);
                prop_assert_eq!(*step.get_or_insert(delta), delta);
                let splits = ht.splits();
                prop_assert!(frozen.iter().all(|s| splits.contains(s)));
                frozen = splits;
            } else {
                prop_assert_eq!(after, before);
            }
            before = after;
        }
    }
}
