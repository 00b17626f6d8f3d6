//! Gaussian Naive Bayes with constant space.

use std::f64::consts::PI;

use crate::error::Result;
use crate::model::{check_dim, training_label, ClassId, Classifier, Instance, COUNTER_BYTES, REAL_BYTES};

/// Variances below this are raised to it when scoring.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Per-class, per-feature running Gaussian statistics (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    dim: usize,
    class_counts: Vec<u64>,
    // Row-major [class][feature].
    means: Vec<f64>,
    sq_devs: Vec<f64>,
    total: u64,
}

impl GaussianStats {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        GaussianStats {
            dim,
            class_counts: vec![0; num_classes],
            means: vec![0.0; dim * num_classes],
            sq_devs: vec![0.0; dim * num_classes],
            total: 0,
        }
    }

    pub fn dimensionality(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn update(&mut self, features: &[f64], label: ClassId) {
        self.class_counts[label] += 1;
        self.total += 1;
        let n = self.class_counts[label] as f64;
        let row = label * self.dim;
        for (f, &x) in features.iter().enumerate() {
            let mean = &mut self.means[row + f];
            let delta = x - *mean;
            *mean += delta / n;
            self.sq_devs[row + f] += delta * (x - *mean);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn class_count(&self, class: ClassId) -> u64 {
        self.class_counts[class]
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn mean(&self, class: ClassId, feature: usize) -> f64 {
        self.means[class * self.dim + feature]
    }

    /// Population variance, unfloored; 0 for fewer than two observations.
    pub fn variance(&self, class: ClassId, feature: usize) -> f64 {
        let n = self.class_counts[class];
        if n < 2 {
            return 0.0;
        }
        (self.sq_devs[class * self.dim + feature] / n as f64).max(0.0)
    }

    pub fn prior(&self, class: ClassId) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.class_counts[class] as f64 / self.total as f64
    }

    /// Log prior plus summed Gaussian log densities. −∞ for unseen classes.
    pub fn log_score(&self, features: &[f64], class: ClassId) -> f64 {
        let n = self.class_counts[class];
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let mut score = (n as f64 / self.total as f64).ln();
        let row = class * self.dim;
        for (f, &x) in features.iter().enumerate() {
            let var = (self.sq_devs[row + f] / n as f64).max(VARIANCE_FLOOR);
            let d = x - self.means[row + f];
            score -= 0.5 * (2.0 * PI * var).ln() + d * d / (2.0 * var);
        }
        score
    }

    pub fn predict(&self, features: &[f64]) -> ClassId {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for class in 0..self.class_counts.len() {
            let s = self.log_score(features, class);
            if s > best_score {
                best = class;
                best_score = s;
            }
        }
        best
    }

    /// Accounted size: one counter per class plus mean and squared
    /// deviation per (class, feature).
    pub fn record_bytes(dim: usize, num_classes: usize) -> usize {
        num_classes * COUNTER_BYTES + 2 * dim * num_classes * REAL_BYTES
    }
}

#[derive(Debug, Clone)]
pub struct NaiveBayes {
    stats: GaussianStats,
}

impl NaiveBayes {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        NaiveBayes {
            stats: GaussianStats::new(dim, num_classes),
        }
    }

    pub fn stats(&self) -> &GaussianStats {
        &self.stats
    }
}

impl Classifier for NaiveBayes {
    fn dimensionality(&self) -> usize {
        self.stats.dim
    }

    fn num_classes(&self) -> usize {
        self.stats.num_classes()
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        check_dim(self.stats.dim, features)?;
        Ok(self.stats.predict(features))
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        let label = training_label(instance, self.stats.dim, self.stats.num_classes())?;
        self.stats.update(&instance.features, label);
        Ok(())
    }

    fn memory_bytes(&self) -> usize {
        GaussianStats::record_bytes(self.stats.dim, self.stats.num_classes())
    }
}
