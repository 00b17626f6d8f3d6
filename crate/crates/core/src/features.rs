//! Windowed feature extraction for multi-axis sensor streams, CSV ingestion
//! and label-shift drift.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ClassId, Instance};

/// Samples per window (one second at 50 Hz).
pub const WINDOW_SIZE: usize = 50;
/// Accelerometer and gyroscope axes.
pub const AXES: usize = 6;
/// Histogram bins per axis.
pub const HISTOGRAM_BINS: usize = 20;
/// Share of the stream used to freeze histogram ranges.
pub const RANGE_PREFIX: f64 = 0.1;

/// One raw sensor reading.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub axes: Vec<f64>,
    pub label: ClassId,
}

/// A block of consecutive samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
}

impl SampleWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn axes(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    fn axis(&self, a: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |s| s[a])
    }
}

/// Groups samples into non-overlapping windows, holding at most one
/// window in memory. A trailing partial window is dropped.
#[derive(Debug)]
pub struct Windows<I> {
    inner: I,
    size: usize,
    peak_buffered: usize,
}

impl<I> Windows<I> {
    pub fn new(inner: I, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::usage("window size must be at least 1"));
        }
        Ok(Windows {
            inner,
            size,
            peak_buffered: 0,
        })
    }

    /// Largest number of samples held at once so far.
    pub fn peak_buffered(&self) -> usize {
        self.peak_buffered
    }
}

impl<I> Iterator for Windows<I>
where
    I: Iterator<Item = Result<RawSample>>,
{
    type Item = Result<SampleWindow>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut samples = Vec::with_capacity(self.size);
        let mut labels = Vec::with_capacity(self.size);
        while samples.len() < self.size {
            match self.inner.next()? {
                Ok(s) => {
                    samples.push(s.axes);
                    labels.push(s.label);
                    self.peak_buffered = self.peak_buffered.max(samples.len());
                }
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(SampleWindow { samples, labels }))
    }
}

/// Splits an in-memory sample sequence into windows.
pub fn window_stream(samples: Vec<RawSample>, size: usize) -> Result<Vec<SampleWindow>> {
    Windows::new(samples.into_iter().map(Ok), size)?.collect()
}

/// Most frequent label; ties go to the lowest id.
pub fn majority_label(window: &SampleWindow) -> ClassId {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &l in &window.labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut best = (0, 0);
    for (label, n) in counts {
        if n > best.1 {
            best = (label, n);
        }
    }
    best.0
}

/// Mean and population standard deviation per axis, interleaved
/// `[mean(a0), std(a0), mean(a1), ...]`, labelled by majority.
pub fn meanstd_features(window: &SampleWindow) -> Result<Instance> {
    if window.is_empty() {
        return Err(Error::usage("cannot extract features from an empty window"));
    }
    let n = window.len() as f64;
    let mut features = Vec::with_capacity(2 * window.axes());
    for a in 0..window.axes() {
        let mean = window.axis(a).sum::<f64>() / n;
        let var = window.axis(a).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        features.push(mean);
        features.push(var.sqrt());
    }
    Ok(Instance::new(features, majority_label(window)))
}

/// Per-axis `[lo, hi]` bounds for histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRanges(pub Vec<(f64, f64)>);

impl HistogramRanges {
    /// Min/max per axis over `samples`. Degenerate axes are widened to a
    /// unit interval around their value.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut ranges: Vec<(f64, f64)> = Vec::new();
        for s in samples {
            if ranges.is_empty() {
                ranges = s.iter().map(|&v| (v, v)).collect();
            }
            for (r, &v) in ranges.iter_mut().zip(s) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        if ranges.is_empty() {
            return Err(Error::usage("histogram ranges need at least one sample"));
        }
        for r in &mut ranges {
            if r.1 <= r.0 {
                *r = (r.0 - 0.5, r.0 + 0.5);
            }
        }
        Ok(HistogramRanges(ranges))
    }

    /// Ranges frozen from the first `RANGE_PREFIX` share of `samples`.
    pub fn from_prefix(samples: &[RawSample]) -> Result<Self> {
        let n = ((samples.len() as f64 * RANGE_PREFIX).ceil() as usize).clamp(1, samples.len().max(1));
        Self::from_samples(samples.iter().take(n).map(|s| s.axes.as_slice()))
    }
}

/// Normalised equal-width histogram per axis, axes concatenated.
/// Out-of-range values clamp into the first or last bin.
pub fn histogram_features(window: &SampleWindow, bins: usize, ranges: &HistogramRanges) -> Result<Instance> {
    if bins == 0 {
        return Err(Error::usage("histogram needs at least one bin"));
    }
    if window.is_empty() {
        return Err(Error::usage("cannot extract features from an empty window"));
    }
    if ranges.0.len() != window.axes() {
        return Err(Error::Dimension {
            expected: ranges.0.len(),
            got: window.axes(),
        });
    }
    if ranges.0.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::usage("histogram ranges need lo < hi"));
    }
    let n = window.len() as f64;
    let mut features = vec![0.0; bins * window.axes()];
    for (a, &(lo, hi)) in ranges.0.iter().enumerate() {
        let width = (hi - lo) / bins as f64;
        for v in window.axis(a) {
            let b = ((v - lo) / width).floor();
            let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
            features[a * bins + b] += 1.0;
        }
    }
    for f in &mut features {
        *f /= n;
    }
    Ok(Instance::new(features, majority_label(window)))
}

/// Label shift applied from `position` onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftConfig {
    pub position: usize,
    pub shift: usize,
}

impl DriftConfig {
    /// Shift by one starting at the midpoint.
    pub fn midpoint(length: usize) -> Self {
        DriftConfig {
            position: length / 2,
            shift: 1,
        }
    }

    pub fn validate(&self, length: usize, num_classes: usize) -> Result<()> {
        if self.position == 0 || self.position >= length {
            return Err(Error::usage(format!(
                "drift position {} must lie strictly inside a stream of {length}",
                self.position
            )));
        }
        if num_classes == 0 || self.shift.is_multiple_of(num_classes) {
            return Err(Error::usage("drift shift is a multiple of the class count"));
        }
        Ok(())
    }

    /// Label of element `index` after drift.
    pub fn relabel(&self, index: usize, label: ClassId, num_classes: usize) -> ClassId {
        if index >= self.position {
            (label + self.shift) % num_classes
        } else {
            label
        }
    }
}

/// Shifts labels of every element at or after `cfg.position` by
/// `cfg.shift` modulo `num_classes`.
pub fn inject_drift(mut stream: Vec<Instance>, cfg: DriftConfig, num_classes: usize) -> Result<Vec<Instance>> {
    cfg.validate(stream.len(), num_classes)?;
    for (i, x) in stream.iter_mut().enumerate() {
        x.label = x.label.map(|l| cfg.relabel(i, l, num_classes));
    }
    Ok(stream)
}

/// Seeded uniform permutation.
pub fn shuffle_stream<T>(mut stream: Vec<T>, seed: u64) -> Vec<T> {
    stream.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    stream
}

/// Dense relabelling of sparse integer labels, in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    map: BTreeMap<i64, ClassId>,
}

impl LabelMap {
    pub fn from_labels(labels: impl IntoIterator<Item = i64>) -> Self {
        let mut seen: Vec<i64> = labels.into_iter().collect();
        seen.sort_unstable();
        seen.dedup();
        LabelMap {
            map: seen.into_iter().enumerate().map(|(i, l)| (l, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, raw: i64) -> Option<ClassId> {
        self.map.get(&raw).copied()
    }

    /// (raw label, dense id) pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (i64, ClassId)> + '_ {
        self.map.iter().map(|(&r, &d)| (r, d))
    }
}

fn parse_row(record: &csv::StringRecord, line: usize, width: Option<usize>) -> Result<(Vec<f64>, i64)> {
    if record.len() < 2 {
        return Err(Error::Data {
            line,
            message: "need at least one value column and a label".into(),
        });
    }
    if let Some(w) = width {
        if record.len() != w {
            return Err(Error::Data {
                line,
                message: format!("expected {w} columns, found {}", record.len()),
            });
        }
    }
    let last = record.len() - 1;
    let mut values = Vec::with_capacity(last);
    for (i, field) in record.iter().take(last).enumerate() {
        let v: f64 = field.trim().parse().map_err(|_| Error::Data {
            line,
            message: format!("column {i}: `{field}` is not a number"),
        })?;
        values.push(v);
    }
    let raw = &record[last];
    let label: i64 = raw.trim().parse().map_err(|_| Error::Data {
        line,
        message: format!("label `{raw}` is not an integer"),
    })?;
    Ok((values, label))
}

/// Streaming reader for `v0,...,v{N-1},label` CSV files with a header row.
pub struct CsvRows {
    reader: csv::Reader<File>,
    width: usize,
    labels: Option<LabelMap>,
    record: csv::StringRecord,
}

impl CsvRows {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
        let width = reader.headers()?.len();
        if width < 2 {
            return Err(Error::Data {
                line: 1,
                message: "header needs at least one value column and a label".into(),
            });
        }
        Ok(CsvRows {
            reader,
            width,
            labels: None,
            record: csv::StringRecord::new(),
        })
    }

    /// Remaps raw labels through `labels`; unknown labels become data errors.
    pub fn with_labels(mut self, labels: LabelMap) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Number of value columns.
    pub fn values(&self) -> usize {
        self.width - 1
    }

    fn next_row(&mut self) -> Option<Result<(Vec<f64>, ClassId)>> {
        match self.reader.read_record(&mut self.record) {
            Ok(false) => None,
            Err(e) => Some(Err(e.into())),
            Ok(true) => {
                let line = self.record.position().map_or(0, |p| p.line() as usize);
                Some(parse_row(&self.record, line, Some(self.width)).and_then(|(v, raw)| {
                    let label = match &self.labels {
                        Some(map) => map.get(raw).ok_or_else(|| Error::Data {
                            line,
                            message: format!("label {raw} missing from the label map"),
                        })?,
                        None => usize::try_from(raw).map_err(|_| Error::Data {
                            line,
                            message: format!("label {raw} is negative"),
                        })?,
                    };
                    Ok((v, label))
                }))
            }
        }
    }

    pub fn instances(self) -> impl Iterator<Item = Result<Instance>> {
        let mut rows = self;
        std::iter::from_fn(move || rows.next_row()).map(|r| r.map(|(v, l)| Instance::new(v, l)))
    }

    pub fn samples(self) -> impl Iterator<Item = Result<RawSample>> {
        let mut rows = self;
        std::iter::from_fn(move || rows.next_row()).map(|r| r.map(|(axes, label)| RawSample { axes, label }))
    }
}

/// Scans a CSV once for its row count and label set.
pub fn scan_csv(path: &Path) -> Result<(usize, LabelMap)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let width = reader.headers()?.len();
    let mut record = csv::StringRecord::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        let (_, label) = parse_row(&record, line, Some(width))?;
        labels.push(label);
        rows += 1;
    }
    Ok((rows, LabelMap::from_labels(labels)))
}

/// Writes instances as `f0,...,f{D-1},label`.
pub fn write_feature_csv<W: Write>(out: W, instances: impl IntoIterator<Item = Instance>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header_written = false;
    for x in instances {
        if !header_written {
            let mut header: Vec<String> = (0..x.features.len()).map(|i| format!("f{i}")).collect();
            header.push("label".into());
            w.write_record(&header)?;
            header_written = true;
        }
        let label = x
            .label
            .ok_or_else(|| Error::usage("feature CSV rows need labels"))?;
        let mut row: Vec<String> = x.features.iter().map(|v| format!("{v}")).collect();
        row.push(label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
