//! Benchmark orchestration: classifier and dataset identifiers, repetition
//! runs, grid tuning and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{offline_knn, EmptyClassifier, K_RANGE};
use crate::error::{Error, Result};
use crate::eval::{Checkpoint, Prequential, RunReport, REPORT_EVERY};
use crate::features::{
    histogram_features, meanstd_features, scan_csv, shuffle_stream, CsvRows, DriftConfig, HistogramRanges, LabelMap,
    Windows, HISTOGRAM_BINS, RANGE_PREFIX, WINDOW_SIZE,
};
use crate::fnn::{Fnn, FnnParams};
use crate::generators::{GeneratorKind, GeneratorSpec};
use crate::hoeffding::{HoeffdingParams, HoeffdingTree};
use crate::mcnn::{Mcnn, McnnParams, McnnVariant};
use crate::model::{Classifier, Instance};
use crate::mondrian::{MondrianForest, MondrianParams};
use crate::naive_bayes::NaiveBayes;
use crate::par::{self, Execution};
use crate::seed::{self, Purpose};

pub const CLASSIFIER_NAMES: [&str; 8] = [
    "nb",
    "ht",
    "mf",
    "mcnn-origin",
    "mcnn-orpaillecc",
    "fnn",
    "empty",
    "knn-offline",
];

/// Offline pretraining source for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrain {
    /// Feature CSV with the same shape as the benchmark stream.
    pub path: PathBuf,
    pub epochs: usize,
    /// Share of the file sampled for pretraining, in (0, 1].
    pub fraction: f64,
}

/// Classifier choice with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierParams {
    NaiveBayes,
    Hoeffding(HoeffdingParams),
    Mondrian {
        params: MondrianParams,
        /// Fixed forest seed; the repetition seed is used when absent.
        seed: Option<u64>,
    },
    Mcnn(McnnParams),
    Fnn {
        params: FnnParams,
        pretrain: Option<Pretrain>,
    },
    Empty,
    KnnOffline {
        k_range: (usize, usize),
    },
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("bad value `{value}` for `{key}`")))
}

/// Splits `k=v,k=v` into pairs.
pub fn parse_pairs(s: &str) -> Result<Vec<(String, String)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::usage(format!("expected key=value, got `{p}`")))
        })
        .collect()
}

impl ClassifierParams {
    /// Defaults for a classifier name.
    pub fn defaults(name: &str) -> Result<Self> {
        Ok(match name {
            "nb" => ClassifierParams::NaiveBayes,
            "ht" => ClassifierParams::Hoeffding(HoeffdingParams::default()),
            "mf" => ClassifierParams::Mondrian {
                params: MondrianParams::default(),
                seed: None,
            },
            "mcnn-origin" => ClassifierParams::Mcnn(McnnParams::origin()),
            "mcnn-orpaillecc" => ClassifierParams::Mcnn(McnnParams::orpaillecc()),
            "fnn" => ClassifierParams::Fnn {
                params: FnnParams::default(),
                pretrain: None,
            },
            "empty" => ClassifierParams::Empty,
            "knn-offline" => ClassifierParams::KnnOffline { k_range: K_RANGE },
            _ => {
                return Err(Error::usage(format!(
                    "unknown classifier `{name}`; expected one of {}",
                    CLASSIFIER_NAMES.join(", ")
                )))
            }
        })
    }

    /// Defaults for `name` overridden by a `k=v,...` list.
    pub fn parse(name: &str, params: &str) -> Result<Self> {
        let mut p = Self::defaults(name)?;
        for (k, v) in parse_pairs(params)? {
            p.set(&k, &v)?;
        }
        Ok(p)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierParams::NaiveBayes => "nb",
            ClassifierParams::Hoeffding(_) => "ht",
            ClassifierParams::Mondrian { .. } => "mf",
            ClassifierParams::Mcnn(p) => match p.variant {
                McnnVariant::Origin => "mcnn-origin",
                McnnVariant::OrpailleCC => "mcnn-orpaillecc",
            },
            ClassifierParams::Fnn { .. } => "fnn",
            ClassifierParams::Empty => "empty",
            ClassifierParams::KnnOffline { .. } => "knn-offline",
        }
    }

    /// Overrides one hyperparameter.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = |name: &str| Error::usage(format!("classifier `{name}` has no parameter `{key}`"));
        let name = self.name();
        match self {
            ClassifierParams::Hoeffding(p) => match key {
                "delta" => p.delta = parse_num(key, value)?,
                "grace" => p.grace_period = parse_num(key, value)?,
                "tie_epsilon" => p.tie_epsilon = parse_num(key, value)?,
                _ => return Err(unknown(name)),
            },
            ClassifierParams::Mondrian { params: p, seed } => match key {
                "trees" => p.tree_count = parse_num(key, value)?,
                "base" => p.base_count = parse_num(key, value)?,
                "discount" => p.discount_factor = parse_num(key, value)?,
                "budget" => p.budget = parse_num(key, value)?,
                "mem_kb" => p.memory_bytes = parse_num::<usize>(key, value)? * 1024,
                "seed" => *seed = Some(parse_num(key, value)?),
                _ => return Err(unknown(name)),
            },
            ClassifierParams::Mcnn(p) => match key {
                "error_threshold" => p.error_threshold = parse_num(key, value)?,
                "participation_threshold" => p.participation_threshold = parse_num(key, value)?,
                "max_clusters" => p.max_clusters = parse_num(key, value)?,
                _ => return Err(unknown(name)),
            },
            ClassifierParams::Fnn { params, pretrain } => match key {
                "hidden" => {
                    params.hidden = value
                        .split('-')
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_num(key, s))
                        .collect::<Result<_>>()?
                }
                "lr" => params.learning_rate = parse_num(key, value)?,
                "pretrain" => {
                    let mut parts = value.rsplitn(3, ':');
                    let (fraction, epochs, path) = match (parts.next(), parts.next(), parts.next()) {
                        (Some(f), Some(e), Some(p)) if !p.is_empty() => (f, e, p),
                        _ => return Err(Error::usage("pretrain expects <path>:<epochs>:<fraction>")),
                    };
                    let fraction: f64 = parse_num(key, fraction)?;
                    if !(fraction > 0.0 && fraction <= 1.0) {
                        return Err(Error::usage("pretrain fraction must lie in (0, 1]"));
                    }
                    *pretrain = Some(Pretrain {
                        path: PathBuf::from(path),
                        epochs: parse_num(key, epochs)?,
                        fraction,
                    });
                }
                _ => return Err(unknown(name)),
            },
            ClassifierParams::KnnOffline { k_range } => match key {
                "k_min" => k_range.0 = parse_num(key, value)?,
                "k_max" => k_range.1 = parse_num(key, value)?,
                _ => return Err(unknown(name)),
            },
            ClassifierParams::NaiveBayes | ClassifierParams::Empty => return Err(unknown(name)),
        }
        Ok(())
    }

    /// Whether the classifier runs prequentially.
    pub fn is_streaming(&self) -> bool {
        !matches!(self, ClassifierParams::KnnOffline { .. })
    }

    /// Instantiates a streaming classifier.
    pub fn build(&self, dim: usize, num_classes: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(match self {
            ClassifierParams::NaiveBayes => Box::new(NaiveBayes::new(dim, num_classes)),
            ClassifierParams::Hoeffding(p) => Box::new(HoeffdingTree::new(dim, num_classes, p.clone())?),
            ClassifierParams::Mondrian { params, seed: fixed } => Box::new(MondrianForest::new(
                dim,
                num_classes,
                params.clone(),
                fixed.unwrap_or(seed),
            )?),
            ClassifierParams::Mcnn(p) => Box::new(Mcnn::new(dim, num_classes, p.clone())?),
            ClassifierParams::Fnn { params, pretrain } => {
                let mut fnn = Fnn::new(dim, num_classes, params, seed)?;
                if let Some(pre) = pretrain {
                    let sample = pretrain_sample(pre, dim, num_classes, seed)?;
                    fnn.network_mut()
                        .pretrain(&sample, pre.epochs, seed::derive(seed, 1, Purpose::Shuffle))?;
                }
                Box::new(fnn)
            }
            ClassifierParams::Empty => Box::new(EmptyClassifier::new(dim, num_classes)),
            ClassifierParams::KnnOffline { .. } => {
                return Err(Error::usage("knn-offline is not a streaming classifier"))
            }
        })
    }
}

fn pretrain_sample(pre: &Pretrain, dim: usize, num_classes: usize, seed: u64) -> Result<Vec<Instance>> {
    let rows = CsvRows::open(&pre.path)?;
    if rows.values() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: rows.values(),
        });
    }
    let mut all: Vec<Instance> = rows.instances().collect::<Result<_>>()?;
    if let Some(bad) = all.iter().position(|x| x.label.is_some_and(|l| l >= num_classes)) {
        return Err(Error::Data {
            line: bad + 2,
            message: format!("label outside [0, {num_classes})"),
        });
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(seed, 0, Purpose::Shuffle)));
    let n = ((all.len() as f64 * pre.fraction).round() as usize).clamp(1, all.len().max(1));
    all.truncate(n);
    Ok(all)
}

/// Windowing applied to raw sample files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturePipeline {
    /// The file already holds feature rows.
    None,
    MeanStd,
    Histogram { bins: usize },
}

impl FeaturePipeline {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeaturePipeline::None),
            "meanstd" => Ok(FeaturePipeline::MeanStd),
            "histogram" => Ok(FeaturePipeline::Histogram { bins: HISTOGRAM_BINS }),
            _ => Err(Error::usage(format!("unknown feature pipeline `{s}`"))),
        }
    }
}

/// Where a stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic(GeneratorSpec),
    File(PathBuf),
}

impl DatasetSpec {
    /// Parses `synth:<kind>[,key=value...]` or a file path.
    pub fn parse(id: &str) -> Result<Self> {
        let Some(rest) = id.strip_prefix("synth:") else {
            let path = PathBuf::from(id);
            if !path.is_file() {
                return Err(Error::usage(format!("dataset `{id}` is neither a synth id nor a file")));
            }
            return Ok(DatasetSpec::File(path));
        };
        let (kind, params) = rest.split_once(',').unwrap_or((rest, ""));
        let kind = GeneratorKind::from_name(kind).ok_or_else(|| {
            Error::usage(format!(
                "unknown generator `{kind}`; expected hyperplane, randomrbf or randomtree"
            ))
        })?;
        let mut spec = GeneratorSpec::new(kind, 1);
        for (k, v) in parse_pairs(params)? {
            match (k.as_str(), &mut spec.kind) {
                ("seed", _) => spec.seed = parse_num(&k, &v)?,
                ("n", _) => spec.shape.length = parse_num(&k, &v)?,
                ("noise", GeneratorKind::Hyperplane(p)) => p.noise = parse_num(&k, &v)?,
                ("centroids", GeneratorKind::RandomRbf(p)) => p.centroids = parse_num(&k, &v)?,
                ("spread", GeneratorKind::RandomRbf(p)) => p.max_spread = parse_num(&k, &v)?,
                ("depth", GeneratorKind::RandomTree(p)) => p.depth = parse_num(&k, &v)?,
                _ => return Err(Error::usage(format!("unknown dataset parameter `{k}`"))),
            }
        }
        spec.validate()?;
        Ok(DatasetSpec::Synthetic(spec))
    }

    /// Canonical identifier written to CSVs.
    pub fn id(&self) -> String {
        match self {
            DatasetSpec::Synthetic(g) => format!("synth:{},seed={},n={}", g.kind.name(), g.seed, g.shape.length),
            DatasetSpec::File(p) => p.display().to_string(),
        }
    }
}

/// A dataset ready to be streamed repeatedly.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub id: String,
    pub dimensionality: usize,
    pub num_classes: usize,
    /// Elements per pass (instances after windowing).
    pub length: usize,
    source: Source,
}

#[derive(Debug, Clone)]
enum Source {
    Synthetic(GeneratorSpec),
    Features {
        path: PathBuf,
        labels: LabelMap,
    },
    Raw {
        path: PathBuf,
        labels: LabelMap,
        window: usize,
        pipeline: FeaturePipeline,
        ranges: Option<HistogramRanges>,
    },
}

/// Fallible instance stream.
pub type InstanceStream = Box<dyn Iterator<Item = Result<Instance>> + Send>;

impl PreparedDataset {
    pub fn prepare(spec: &DatasetSpec, pipeline: FeaturePipeline, window: usize) -> Result<Self> {
        match spec {
            DatasetSpec::Synthetic(g) => {
                if pipeline != FeaturePipeline::None {
                    return Err(Error::usage("synthetic streams take no feature pipeline"));
                }
                g.validate()?;
                Ok(PreparedDataset {
                    id: spec.id(),
                    dimensionality: g.shape.dimensionality,
                    num_classes: g.shape.num_classes,
                    length: g.shape.length,
                    source: Source::Synthetic(g.clone()),
                })
            }
            DatasetSpec::File(path) => {
                let (rows, labels) = scan_csv(path)?;
                if labels.len() < 2 {
                    return Err(Error::config("a dataset needs at least 2 distinct labels"));
                }
                let values = CsvRows::open(path)?.values();
                let (dimensionality, length, source) = match pipeline {
                    FeaturePipeline::None => (
                        values,
                        rows,
                        Source::Features {
                            path: path.clone(),
                            labels: labels.clone(),
                        },
                    ),
                    FeaturePipeline::MeanStd | FeaturePipeline::Histogram { .. } => {
                        if window == 0 {
                            return Err(Error::usage("window size must be at least 1"));
                        }
                        let (dim, ranges) = match pipeline {
                            FeaturePipeline::Histogram { bins } => {
                                let prefix = ((rows as f64 * RANGE_PREFIX).ceil() as usize).max(1);
                                let ranges = prefix_ranges(path, prefix)?;
                                (bins * values, Some(ranges))
                            }
                            _ => (2 * values, None),
                        };
                        (
                            dim,
                            rows / window,
                            Source::Raw {
                                path: path.clone(),
                                labels: labels.clone(),
                                window,
                                pipeline,
                                ranges,
                            },
                        )
                    }
                };
                Ok(PreparedDataset {
                    id: spec.id(),
                    dimensionality,
                    num_classes: labels.len(),
                    length,
                    source,
                })
            }
        }
    }

    /// Streams one pass; `sample_seed` drives synthetic draws.
    pub fn stream(&self, sample_seed: u64) -> Result<InstanceStream> {
        Ok(match &self.source {
            Source::Synthetic(g) => {
                let g = g.clone().with_sample_seed(sample_seed);
                Box::new(g.stream()?.map(Ok))
            }
            Source::Features { path, labels } => Box::new(CsvRows::open(path)?.with_labels(labels.clone()).instances()),
            Source::Raw {
                path,
                labels,
                window,
                pipeline,
                ranges,
            } => {
                let samples = CsvRows::open(path)?.with_labels(labels.clone()).samples();
                Box::new(WindowedInstances {
                    windows: Windows::new(samples, *window)?,
                    pipeline: *pipeline,
                    ranges: ranges.clone(),
                })
            }
        })
    }

    /// Raw label for each dense class id, for file datasets.
    pub fn label_map(&self) -> Option<&LabelMap> {
        match &self.source {
            Source::Synthetic(_) => None,
            Source::Features { labels, .. } | Source::Raw { labels, .. } => Some(labels),
        }
    }
}

fn prefix_ranges(path: &Path, prefix: usize) -> Result<HistogramRanges> {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for s in CsvRows::open(path)?.samples().take(prefix) {
        let s = s?;
        if lo.is_empty() {
            lo.clone_from(&s.axes);
            hi.clone_from(&s.axes);
        }
        for ((l, h), v) in lo.iter_mut().zip(hi.iter_mut()).zip(&s.axes) {
            *l = l.min(*v);
            *h = h.max(*v);
        }
    }
    HistogramRanges::from_samples([lo.as_slice(), hi.as_slice()].into_iter().filter(|s| !s.is_empty()))
}

/// Feature instances computed window by window from a raw sample reader.
pub struct WindowedInstances<I> {
    windows: Windows<I>,
    pipeline: FeaturePipeline,
    ranges: Option<HistogramRanges>,
}

impl<I> WindowedInstances<I> {
    pub fn new(windows: Windows<I>, pipeline: FeaturePipeline, ranges: Option<HistogramRanges>) -> Self {
        WindowedInstances {
            windows,
            pipeline,
            ranges,
        }
    }

    /// Most raw samples held in memory at once.
    pub fn peak_buffered(&self) -> usize {
        self.windows.peak_buffered()
    }
}

impl<I> Iterator for WindowedInstances<I>
where
    I: Iterator<Item = Result<crate::features::RawSample>>,
{
    type Item = Result<Instance>;

    fn next(&mut self) -> Option<Result<Instance>> {
        let w = match self.windows.next()? {
            Ok(w) => w,
            Err(e) => return Some(Err(e)),
        };
        Some(match (self.pipeline, &self.ranges) {
            (FeaturePipeline::Histogram { bins }, Some(r)) => histogram_features(&w, bins, r),
            _ => meanstd_features(&w),
        })
    }
}

/// Drift request; the position defaults to the stream midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftSetting {
    pub position: Option<usize>,
    pub shift: usize,
}

impl DriftSetting {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "midpoint" {
            return Ok(DriftSetting {
                position: None,
                shift: 1,
            });
        }
        let (pos, shift) = s.split_once(':').unwrap_or((s, "1"));
        let position = if pos == "midpoint" {
            None
        } else {
            Some(parse_num("drift position", pos)?)
        };
        Ok(DriftSetting {
            position,
            shift: parse_num("drift shift", shift)?,
        })
    }

    pub fn resolve(&self, length: usize) -> DriftConfig {
        DriftConfig {
            position: self.position.unwrap_or(length / 2),
            shift: self.shift,
        }
    }
}

/// Optional output files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub timeline: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    /// Per-checkpoint means across repetitions.
    pub mean_timeline: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dataset: DatasetSpec,
    pub classifier: ClassifierParams,
    pub reps: usize,
    pub base_seed: u64,
    pub shuffle: bool,
    pub drift: Option<DriftSetting>,
    pub pipeline: FeaturePipeline,
    pub window: usize,
    /// Measure runtimes, including the empty-classifier baseline. Runtime
    /// columns stay empty otherwise so outputs are reproducible.
    pub timing: bool,
    /// Keep per-element predictions in the reports.
    pub keep_predictions: bool,
    pub report_every: usize,
    pub execution: Execution,
    pub outputs: Outputs,
}

impl BenchConfig {
    pub fn new(dataset: DatasetSpec, classifier: ClassifierParams) -> Self {
        BenchConfig {
            dataset,
            classifier,
            reps: 1,
            base_seed: 1,
            shuffle: false,
            drift: None,
            pipeline: FeaturePipeline::None,
            window: WINDOW_SIZE,
            timing: false,
            keep_predictions: false,
            report_every: REPORT_EVERY,
            execution: Execution::default(),
            outputs: Outputs::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::usage("repetitions must be at least 1"));
        }
        if self.report_every == 0 {
            return Err(Error::usage("report interval must be at least 1"));
        }
        if let DatasetSpec::File(p) = &self.dataset {
            if !p.is_file() {
                return Err(Error::usage(format!("dataset file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn rep_seeds(&self) -> Vec<u64> {
        (0..self.reps as u64).map(|r| self.base_seed.wrapping_add(r)).collect()
    }
}

/// Aggregate over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub classifier: String,
    pub dataset: String,
    pub reps: usize,
    pub final_f1_mean: f64,
    pub final_f1_std: f64,
    pub runtime_s_mean: Option<f64>,
    pub net_runtime_s_mean: Option<f64>,
    pub peak_memory_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub dataset: PreparedDataset,
    pub reports: Vec<RunReport>,
    pub summary: Summary,
}

impl BenchOutcome {
    pub fn final_f1s(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.final_macro_f1.unwrap_or(0.0)).collect()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn materialise(stream: InstanceStream) -> Result<Vec<Instance>> {
    stream.collect()
}

/// One repetition's input: streamed directly unless shuffling forces it
/// into memory.
fn rep_stream(cfg: &BenchConfig, data: &PreparedDataset, rep_seed: u64) -> Result<InstanceStream> {
    let stream = data.stream(seed::derive(rep_seed, 0, Purpose::Generator))?;
    let stream: InstanceStream = if cfg.shuffle {
        let all = materialise(stream)?;
        let shuffled = shuffle_stream(all, seed::derive(rep_seed, 0, Purpose::Shuffle));
        Box::new(shuffled.into_iter().map(Ok))
    } else {
        stream
    };
    Ok(match cfg.drift {
        None => stream,
        Some(d) => {
            let drift = d.resolve(data.length);
            drift.validate(data.length, data.num_classes)?;
            let k = data.num_classes;
            Box::new(stream.enumerate().map(move |(i, x)| {
                x.map(|mut x| {
                    x.label = x.label.map(|l| drift.relabel(i, l, k));
                    x
                })
            }))
        }
    })
}

fn run_rep(cfg: &BenchConfig, data: &PreparedDataset, rep_seed: u64) -> Result<RunReport> {
    let dataset_id = data.id.clone();
    let classifier_seed = seed::derive(rep_seed, 0, Purpose::Classifier);
    let mut report = if cfg.classifier.is_streaming() {
        let mut clf = cfg.classifier.build(data.dimensionality, data.num_classes, classifier_seed)?;
        let preq = Prequential {
            report_every: cfg.report_every,
            keep_predictions: cfg.keep_predictions,
        };
        let mut report = preq.try_run(&mut clf, rep_stream(cfg, data, rep_seed)?)?;
        if cfg.timing {
            let mut empty = EmptyClassifier::new(data.dimensionality, data.num_classes);
            let baseline = preq.try_run(&mut empty, rep_stream(cfg, data, rep_seed)?)?;
            report.apply_baseline(baseline.runtime_seconds);
        }
        report
    } else {
        let ClassifierParams::KnnOffline { k_range } = cfg.classifier else {
            unreachable!()
        };
        let all = materialise(rep_stream(cfg, data, rep_seed)?)?;
        let start = std::time::Instant::now();
        let offline = offline_knn(Execution::Sequential, &all, data.num_classes, k_range, classifier_seed)?;
        RunReport {
            timeline: vec![Checkpoint {
                elements: all.len(),
                macro_f1: Some(offline.evaluation_f1),
                memory_bytes: 0,
            }],
            elements: all.len(),
            final_macro_f1: Some(offline.evaluation_f1),
            runtime_seconds: start.elapsed().as_secs_f64(),
            ..RunReport::default()
        }
    };
    report.classifier = cfg.classifier.name().to_string();
    report.dataset = dataset_id;
    report.seed = rep_seed;
    if !cfg.timing {
        report.runtime_seconds = 0.0;
        report.runtime_minus_baseline_seconds = None;
    }
    Ok(report)
}

/// Runs every repetition and writes the configured CSVs.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let data = PreparedDataset::prepare(&cfg.dataset, cfg.pipeline, cfg.window)?;
    let reports: Vec<RunReport> = par::map(cfg.execution, cfg.rep_seeds(), |s| run_rep(cfg, &data, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let f1s: Vec<f64> = reports.iter().map(|r| r.final_macro_f1.unwrap_or(0.0)).collect();
    let (final_f1_mean, final_f1_std) = mean_std(&f1s);
    let runtimes: Vec<f64> = reports.iter().map(|r| r.runtime_seconds).collect();
    let nets: Vec<f64> = reports.iter().filter_map(|r| r.runtime_minus_baseline_seconds).collect();
    let summary = Summary {
        classifier: cfg.classifier.name().to_string(),
        dataset: data.id.clone(),
        reps: reports.len(),
        final_f1_mean,
        final_f1_std,
        runtime_s_mean: cfg.timing.then(|| mean_std(&runtimes).0),
        net_runtime_s_mean: (cfg.timing && !nets.is_empty()).then(|| mean_std(&nets).0),
        peak_memory_bytes: reports.iter().map(|r| r.peak_memory_bytes).max().unwrap_or(0),
    };
    let outcome = BenchOutcome {
        dataset: data,
        reports,
        summary,
    };
    write_outputs(&outcome, &cfg.outputs)?;
    Ok(outcome)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_timeline<W: Write>(out: W, reports: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["classifier", "dataset", "seed", "elements", "macro_f1", "memory_bytes"])?;
    for r in reports {
        for c in &r.timeline {
            w.write_record([
                r.classifier.clone(),
                r.dataset.clone(),
                r.seed.to_string(),
                c.elements.to_string(),
                opt(c.macro_f1),
                c.memory_bytes.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, rows: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "classifier",
        "dataset",
        "reps",
        "final_f1_mean",
        "final_f1_std",
        "runtime_s_mean",
        "net_runtime_s_mean",
        "peak_memory_bytes",
    ])?;
    for s in rows {
        w.write_record([
            s.classifier.clone(),
            s.dataset.clone(),
            s.reps.to_string(),
            s.final_f1_mean.to_string(),
            s.final_f1_std.to_string(),
            opt(s.runtime_s_mean),
            opt(s.net_runtime_s_mean),
            s.peak_memory_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-checkpoint means over repetitions that reached each checkpoint.
pub fn mean_timeline(reports: &[RunReport]) -> Vec<(usize, Option<f64>, f64)> {
    let longest = reports.iter().map(|r| r.timeline.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let at: Vec<&Checkpoint> = reports.iter().filter_map(|r| r.timeline.get(i)).collect();
            let f1s: Vec<f64> = at.iter().filter_map(|c| c.macro_f1).collect();
            let mem: Vec<f64> = at.iter().map(|c| c.memory_bytes as f64).collect();
            let f1 = (!f1s.is_empty()).then(|| mean_std(&f1s).0);
            (at[0].elements, f1, mean_std(&mem).0)
        })
        .collect()
}

pub fn write_mean_timeline<W: Write>(out: W, summary: &Summary, reports: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["classifier", "dataset", "reps", "elements", "macro_f1_mean", "memory_bytes_mean"])?;
    for (elements, f1, mem) in mean_timeline(reports) {
        w.write_record([
            summary.classifier.clone(),
            summary.dataset.clone(),
            summary.reps.to_string(),
            elements.to_string(),
            opt(f1),
            mem.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(outcome: &BenchOutcome, outputs: &Outputs) -> Result<()> {
    if let Some(p) = &outputs.timeline {
        write_timeline(create(p)?, &outcome.reports)?;
    }
    if let Some(p) = &outputs.summary {
        write_summary(create(p)?, std::slice::from_ref(&outcome.summary))?;
    }
    if let Some(p) = &outputs.mean_timeline {
        write_mean_timeline(create(p)?, &outcome.summary, &outcome.reports)?;
    }
    Ok(())
}

/// One axis of a tuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2;key2=v3` (axes separated by `;`).
pub fn parse_grid(s: &str) -> Result<Vec<GridAxis>> {
    s.split(';')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            let (k, vs) = a
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("grid axis `{a}` needs key=values")))?;
            let values: Vec<String> = vs
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            Ok(GridAxis {
                key: k.trim().to_string(),
                values,
            })
        })
        .collect()
}

/// Cartesian product of the axes; the last axis varies fastest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Vec::new();
    }
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p: Vec<(String, String)>| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// One grid point's parameter assignments.
pub type Assignments = Vec<(String, String)>;

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: ClassifierParams,
    pub best_index: usize,
    /// (assignments, mean final F1, std) per grid point, in grid order.
    pub results: Vec<(Assignments, f64, f64)>,
}

/// Evaluates every grid point over `cfg`'s repetitions and keeps the
/// highest mean final macro-F1; ties go to the earlier point.
pub fn tune_grid(cfg: &BenchConfig, axes: &[GridAxis], grid_out: Option<&Path>) -> Result<TuneOutcome> {
    let points = grid_points(axes);
    if points.is_empty() {
        return Err(Error::usage("the tuning grid is empty"));
    }
    let mut candidates = Vec::with_capacity(points.len());
    for p in &points {
        let mut c = cfg.classifier.clone();
        for (k, v) in p {
            c.set(k, v)?;
        }
        candidates.push(c);
    }
    let mut results = Vec::with_capacity(points.len());
    let mut best_index = 0;
    for (i, (point, params)) in points.into_iter().zip(&candidates).enumerate() {
        let run = BenchConfig {
            classifier: params.clone(),
            outputs: Outputs::default(),
            ..cfg.clone()
        };
        let out = run_bench(&run)?;
        let (mean, std) = (out.summary.final_f1_mean, out.summary.final_f1_std);
        if mean > results.get(best_index).map_or(f64::NEG_INFINITY, |r: &(_, f64, f64)| r.1) {
            best_index = i;
        }
        results.push((point, mean, std));
    }
    if let Some(path) = grid_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header: Vec<String> = vec!["point".into()];
        header.extend(axes.iter().map(|a| a.key.clone()));
        header.extend(["final_f1_mean".into(), "final_f1_std".into()]);
        w.write_record(&header)?;
        for (i, (point, mean, std)) in results.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(point.iter().map(|(_, v)| v.clone()));
            row.extend([mean.to_string(), std.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(TuneOutcome {
        best: candidates.swap_remove(best_index),
        best_index,
        results,
    })
}

/// Writes a synthetic stream as a feature CSV.
pub fn write_synthetic<W: Write>(out: W, spec: &GeneratorSpec) -> Result<()> {
    crate::features::write_feature_csv(out, spec.stream()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_names_round_trip() {
        for name in CLASSIFIER_NAMES {
            assert_eq!(ClassifierParams::defaults(name).unwrap().name(), name);
        }
        assert!(matches!(ClassifierParams::defaults("svm"), Err(Error::Usage(_))));
    }

    #[test]
    fn mondrian_flags() {
        let p = ClassifierParams::parse("mf", "trees=10,mem_kb=600,discount=0.9,seed=4").unwrap();
        let ClassifierParams::Mondrian { params, seed } = p else { panic!() };
        assert_eq!(params.tree_count, 10);
        assert_eq!(params.memory_bytes, 600 * 1024);
        assert_eq!(params.discount_factor, 0.9);
        assert_eq!(seed, Some(4));
        assert!(ClassifierParams::parse("mf", "depth=3").is_err());
        assert!(ClassifierParams::parse("nb", "delta=0.1").is_err());
        assert!(ClassifierParams::parse("ht", "delta=x").is_err());
    }

    #[test]
    fn fnn_flags() {
        let p = ClassifierParams::parse("fnn", "hidden=16-8,lr=0.1,pretrain=/tmp/a:b.csv:3:0.5").unwrap();
        let ClassifierParams::Fnn { params, pretrain } = p else { panic!() };
        assert_eq!(params.hidden, vec![16, 8]);
        assert_eq!(params.learning_rate, 0.1);
        let pre = pretrain.unwrap();
        assert_eq!(pre.path, PathBuf::from("/tmp/a:b.csv"));
        assert_eq!((pre.epochs, pre.fraction), (3, 0.5));
        assert!(ClassifierParams::parse("fnn", "pretrain=x:1:0").is_err());
    }

    #[test]
    fn dataset_ids() {
        let d = DatasetSpec::parse("synth:randomtree,seed=7,n=1000,depth=3").unwrap();
        assert_eq!(d.id(), "synth:randomtree,seed=7,n=1000");
        let DatasetSpec::Synthetic(g) = d else { panic!() };
        assert_eq!((g.seed, g.shape.length, g.shape.num_classes), (7, 1000, 10));
        assert!(DatasetSpec::parse("synth:sea").is_err());
        assert!(DatasetSpec::parse("synth:hyperplane,depth=3").is_err());
        assert!(DatasetSpec::parse("/no/such/file.csv").is_err());
    }

    #[test]
    fn grid_expansion() {
        let axes = parse_grid("base=0,1;discount=0.5,0.7,0.9").unwrap();
        let points = grid_points(&axes);
        assert_eq!(points.len(), 6);
        assert_eq!(points[1], vec![("base".into(), "0".into()), ("discount".into(), "0.7".into())]);
        assert!(grid_points(&parse_grid("").unwrap()).is_empty());
        assert!(grid_points(&parse_grid("base=").unwrap()).is_empty());
    }

    #[test]
    fn drift_settings() {
        assert_eq!(DriftSetting::parse("midpoint").unwrap().resolve(10).position, 5);
        let d = DriftSetting::parse("30:2").unwrap();
        assert_eq!(d.resolve(100), DriftConfig { position: 30, shift: 2 });
    }

    #[test]
    fn summary_stats() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_rep_has_zero_std() {
        let d = DatasetSpec::parse("synth:hyperplane,seed=1,n=500").unwrap();
        let out = run_bench(&BenchConfig::new(d, ClassifierParams::NaiveBayes)).unwrap();
        assert_eq!(out.summary.reps, 1);
        assert_eq!(out.summary.final_f1_std, 0.0);
        assert_eq!(out.reports[0].timeline.len(), 10);
        assert!(out.summary.runtime_s_mean.is_none());
    }
}
