//! Prequential (test-then-train) evaluation.

use std::borrow::Borrow;
use std::time::Instant;

use crate::baselines::EmptyClassifier;
use crate::error::{Error, Result};
use crate::model::{ClassId, Classifier, Instance};

/// Default checkpoint spacing.
pub const REPORT_EVERY: usize = 50;

/// Cumulative one-versus-all counts per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionState {
    tp: Vec<u64>,
    fp: Vec<u64>,
    fn_: Vec<u64>,
    encountered: Vec<bool>,
    processed: u64,
}

impl ConfusionState {
    pub fn new(num_classes: usize) -> Self {
        ConfusionState {
            tp: vec![0; num_classes],
            fp: vec![0; num_classes],
            fn_: vec![0; num_classes],
            encountered: vec![false; num_classes],
            processed: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.tp.len()
    }

    /// Records one (truth, prediction) pair. A class counts as encountered
    /// once it appears as a true label.
    pub fn record(&mut self, truth: ClassId, predicted: ClassId) {
        self.encountered[truth] = true;
        if truth == predicted {
            self.tp[truth] += 1;
        } else {
            self.fn_[truth] += 1;
            self.fp[predicted] += 1;
        }
        self.processed += 1;
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn tp(&self, class: ClassId) -> u64 {
        self.tp[class]
    }

    pub fn fp(&self, class: ClassId) -> u64 {
        self.fp[class]
    }

    pub fn fn_count(&self, class: ClassId) -> u64 {
        self.fn_[class]
    }

    pub fn encountered(&self, class: ClassId) -> bool {
        self.encountered[class]
    }

    /// F1 of one class; 0 when any denominator vanishes.
    pub fn class_f1(&self, class: ClassId) -> f64 {
        let tp = self.tp[class] as f64;
        let predicted = tp + self.fp[class] as f64;
        let actual = tp + self.fn_[class] as f64;
        if predicted == 0.0 || actual == 0.0 {
            return 0.0;
        }
        let p = tp / predicted;
        let r = tp / actual;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Mean F1 over encountered classes; `None` before any class is seen.
    pub fn macro_f1(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in 0..self.tp.len() {
            if self.encountered[c] {
                sum += self.class_f1(c);
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Macro-F1 of a (truth, prediction) log.
pub fn macro_f1_of(log: &[(ClassId, ClassId)], num_classes: usize) -> Option<f64> {
    let mut cm = ConfusionState::new(num_classes);
    for &(t, p) in log {
        cm.record(t, p);
    }
    cm.macro_f1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub elements: usize,
    pub macro_f1: Option<f64>,
    pub memory_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub classifier: String,
    pub dataset: String,
    pub seed: u64,
    pub timeline: Vec<Checkpoint>,
    pub elements: usize,
    pub final_macro_f1: Option<f64>,
    pub peak_memory_bytes: usize,
    pub runtime_seconds: f64,
    pub runtime_minus_baseline_seconds: Option<f64>,
    /// (truth, prediction) per element, when requested.
    pub predictions: Option<Vec<(ClassId, ClassId)>>,
}

impl RunReport {
    /// Subtracts a baseline runtime measured on the same data.
    pub fn apply_baseline(&mut self, baseline_seconds: f64) {
        self.runtime_minus_baseline_seconds = Some(self.runtime_seconds - baseline_seconds);
    }

    /// Macro-F1 over the predictions in `range`, when they were kept.
    pub fn window_f1(&self, range: std::ops::Range<usize>, num_classes: usize) -> Option<f64> {
        let log = self.predictions.as_ref()?;
        macro_f1_of(log.get(range)?, num_classes)
    }
}

/// Prequential loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prequential {
    pub report_every: usize,
    pub keep_predictions: bool,
}

impl Default for Prequential {
    fn default() -> Self {
        Prequential {
            report_every: REPORT_EVERY,
            keep_predictions: false,
        }
    }
}

impl Prequential {
    pub fn keep_predictions(mut self) -> Self {
        self.keep_predictions = true;
        self
    }

    /// Tests then trains on every element, without any fading.
    pub fn run<C, I, B>(&self, classifier: &mut C, stream: I) -> Result<RunReport>
    where
        C: Classifier + ?Sized,
        I: IntoIterator<Item = B>,
        B: Borrow<Instance>,
    {
        self.try_run(classifier, stream.into_iter().map(Ok))
    }

    /// As [`Prequential::run`], over a fallible stream such as a file reader.
    pub fn try_run<C, I, B>(&self, classifier: &mut C, stream: I) -> Result<RunReport>
    where
        C: Classifier + ?Sized,
        I: IntoIterator<Item = Result<B>>,
        B: Borrow<Instance>,
    {
        if self.report_every == 0 {
            return Err(Error::usage("report_every must be at least 1"));
        }
        let mut cm = ConfusionState::new(classifier.num_classes());
        let mut report = RunReport::default();
        let mut log = self.keep_predictions.then(Vec::new);
        let mut n = 0usize;
        let start = Instant::now();
        for item in stream {
            let item = item?;
            let x = item.borrow();
            let truth = x.label.ok_or_else(|| Error::Data {
                line: n + 1,
                message: "prequential evaluation needs labelled elements".into(),
            })?;
            let predicted = classifier.test_then_train(x)?;
            cm.record(truth, predicted);
            if let Some(log) = log.as_mut() {
                log.push((truth, predicted));
            }
            n += 1;
            if n.is_multiple_of(self.report_every) {
                let memory_bytes = classifier.memory_bytes();
                report.peak_memory_bytes = report.peak_memory_bytes.max(memory_bytes);
                report.timeline.push(Checkpoint {
                    elements: n,
                    macro_f1: cm.macro_f1(),
                    memory_bytes,
                });
            }
        }
        report.runtime_seconds = start.elapsed().as_secs_f64();
        report.peak_memory_bytes = report.peak_memory_bytes.max(classifier.memory_bytes());
        report.elements = n;
        report.final_macro_f1 = cm.macro_f1();
        report.predictions = log;
        Ok(report)
    }
}

/// Mean prequential wall time of the empty classifier over `reps` runs.
pub fn runtime_baseline(data: &[Instance], dim: usize, num_classes: usize, reps: usize) -> Result<f64> {
    if reps == 0 {
        return Err(Error::usage("runtime baseline needs at least one repetition"));
    }
    let mut total = 0.0;
    for _ in 0..reps {
        let mut empty = EmptyClassifier::new(dim, num_classes);
        total += Prequential::default().run(&mut empty, data)?.runtime_seconds;
    }
    Ok(total / reps as f64)
}
