use std::io::Write;

use streambench::bench::{
    run_bench, BenchConfig, ClassifierParams, DatasetSpec, DriftSetting, FeaturePipeline, Outputs, PreparedDataset,
    WindowedInstances,
};
use streambench::features::{CsvRows, Windows};
use streambench::{Classifier, Error, Fnn, FnnParams, GeneratorSpec, Instance, MondrianForest, MondrianParams, Prequential};

fn raw_csv(dir: &tempfile::TempDir, rows: usize) -> std::path::PathBuf {
    let path = dir.path().join("raw.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a0,a1,a2,label").unwrap();
    for i in 0..rows {
        let label = [3, 7, 11][(i / 200) % 3];
        writeln!(f, "{},{},{},{label}", (i % 13) as f64 * 0.1, (label as f64).sin(), i as f64 * 1e-3).unwrap();
    }
    path
}

#[test]
fn windowed_loader_buffers_one_window() {
    let dir = tempfile::tempdir().unwrap();
    let path = raw_csv(&dir, 10_000);
    let samples = CsvRows::open(&path).unwrap().samples();
    let mut loader = WindowedInstances::new(Windows::new(samples, 50).unwrap(), FeaturePipeline::MeanStd, None);
    let mut n = 0;
    for x in loader.by_ref() {
        assert_eq!(x.unwrap().features.len(), 6);
        n += 1;
    }
    assert_eq!(n, 200);
    assert!(loader.peak_buffered() <= 50, "peak {}", loader.peak_buffered());
}

#[test]
fn raw_file_runs_through_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let path = raw_csv(&dir, 5_000);
    for (pipeline, dim) in [(FeaturePipeline::MeanStd, 6), (FeaturePipeline::Histogram { bins: 20 }, 60)] {
        let data = PreparedDataset::prepare(&DatasetSpec::File(path.clone()), pipeline, 50).unwrap();
        assert_eq!((data.dimensionality, data.num_classes, data.length), (dim, 3, 100));
        let labels: Vec<(i64, usize)> = data.label_map().unwrap().pairs().collect();
        assert_eq!(labels, vec![(3, 0), (7, 1), (11, 2)]);
        let mut cfg = BenchConfig::new(DatasetSpec::File(path.clone()), ClassifierParams::defaults("nb").unwrap());
        cfg.pipeline = pipeline;
        let outcome = run_bench(&cfg).unwrap();
        assert_eq!(outcome.reports[0].elements, 100);
    }
}

#[test]
fn malformed_row_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "f0,f1,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,oops,1\n0.1,0.1,0\n").unwrap();
    let err = CsvRows::open(&path)
        .unwrap()
        .instances()
        .collect::<Result<Vec<Instance>, Error>>()
        .unwrap_err();
    match err {
        Error::Data { line, .. } => assert_eq!(line, 4),
        other => panic!("expected a data error, got {other}"),
    }
    let cfg = BenchConfig::new(DatasetSpec::File(path), ClassifierParams::defaults("ht").unwrap());
    assert!(matches!(run_bench(&cfg), Err(Error::Data { line: 4, .. })));
}

#[test]
fn reruns_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, classifier: &str| {
        let dataset = DatasetSpec::parse("synth:randomrbf,seed=2,n=3000").unwrap();
        let mut cfg = BenchConfig::new(dataset, ClassifierParams::parse(classifier, "").unwrap());
        cfg.reps = 3;
        cfg.shuffle = true;
        cfg.drift = Some(DriftSetting::parse("midpoint").unwrap());
        cfg.outputs = Outputs {
            timeline: Some(dir.path().join(format!("{tag}-t.csv"))),
            summary: Some(dir.path().join(format!("{tag}-s.csv"))),
            mean_timeline: Some(dir.path().join(format!("{tag}-m.csv"))),
        };
        run_bench(&cfg).unwrap();
        ["t", "s", "m"].map(|k| std::fs::read(dir.path().join(format!("{tag}-{k}.csv"))).unwrap())
    };
    for classifier in ["mf", "mcnn-origin", "fnn", "knn-offline"] {
        assert_eq!(run("a", classifier), run("b", classifier), "{classifier}");
    }
}

#[test]
fn repetition_results_do_not_depend_on_execution_order() {
    let dataset = DatasetSpec::parse("synth:hyperplane,seed=4,n=2000").unwrap();
    let mut cfg = BenchConfig::new(dataset, ClassifierParams::parse("mf", "budget=5").unwrap());
    cfg.reps = 4;
    cfg.base_seed = 10;
    let all = run_bench(&cfg).unwrap();
    cfg.execution = streambench::Execution::Sequential;
    cfg.reps = 1;
    cfg.base_seed = 12;
    let third = run_bench(&cfg).unwrap();
    assert_eq!(all.reports[2].timeline, third.reports[0].timeline);
    assert_eq!(all.reports.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
}

#[test]
fn memory_timelines_have_the_expected_shape() {
    let data = GeneratorSpec::randomtree(6).with_length(20_000).generate().unwrap();
    for name in ["nb", "mf", "mcnn-origin", "mcnn-orpaillecc", "ht"] {
        let mut c = ClassifierParams::defaults(name).unwrap().build(6, 10, 1).unwrap();
        let report = Prequential::default().run(&mut c, &data).unwrap();
        let mem: Vec<usize> = report.timeline.iter().map(|cp| cp.memory_bytes).collect();
        match name {
            "ht" => assert!(mem.windows(2).all(|w| w[0] <= w[1]) && mem.last() > mem.first()),
            "mf" => assert!(mem.iter().all(|&m| m == 600 * 1024)),
            "nb" => assert!(mem.iter().all(|&m| m == mem[0])),
            _ => assert!(mem.iter().all(|&m| m <= 40 * streambench::mcnn::MicroCluster::record_bytes(6))),
        }
    }
}

#[test]
fn mondrian_is_seed_deterministic_and_partitions_space() {
    let data = GeneratorSpec::randomrbf(3).with_length(2_000).generate().unwrap();
    let params = MondrianParams {
        memory_bytes: 64 << 20,
        budget: 1e9,
        tree_count: 3,
        ..MondrianParams::default()
    };
    let mut a = MondrianForest::new(3, 2, params.clone(), 42).unwrap();
    let mut b = MondrianForest::new(3, 2, params, 42).unwrap();
    for x in &data {
        a.train(x).unwrap();
        b.train(x).unwrap();
    }
    assert_eq!(a.node_count(), b.node_count());
    for x in &data {
        assert_eq!(a.posterior(&x.features), b.posterior(&x.features));
        for t in 0..a.tree_count() {
            let path = a.path(t, &x.features);
            let leaf = *path.last().unwrap();
            assert!(a.arena().is_leaf(leaf));
            let (lo, hi) = (a.arena().lower(leaf), a.arena().upper(leaf));
            assert!(x.features.iter().enumerate().all(|(f, v)| lo[f] <= *v && *v <= hi[f]));
        }
    }
}

#[test]
fn fnn_learns_a_separable_problem_online() {
    let data: Vec<Instance> = GeneratorSpec::hyperplane(9)
        .with_length(10_000)
        .generate()
        .unwrap()
        .into_iter()
        .map(|x| {
            let label = usize::from(x.features[0] > 0.5);
            Instance::new(x.features, label)
        })
        .collect();
    let params = FnnParams {
        hidden: vec![8],
        learning_rate: 0.5,
    };
    let mut fnn = Fnn::new(3, 2, &params, 1).unwrap();
    let report = Prequential::default().keep_predictions().run(&mut fnn, &data).unwrap();
    let log = report.predictions.unwrap();
    let correct = log[9_000..].iter().filter(|(t, p)| t == p).count();
    assert!(correct as f64 / 1_000.0 >= 0.95, "accuracy {}", correct as f64 / 1_000.0);
}
