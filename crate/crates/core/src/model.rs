//! Stream data model and the online-classifier contract.

use crate::error::{Error, Result};

/// Dense class identifier in `[0, num_classes)`.
pub type ClassId = usize;

/// Byte width charged per stored real number.
pub const REAL_BYTES: usize = 8;
/// Byte width charged per stored counter or identifier.
pub const COUNTER_BYTES: usize = 4;

/// One stream element: a feature vector and an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Option<ClassId>,
}

impl Instance {
    pub fn new(features: Vec<f64>, label: ClassId) -> Self {
        Instance {
            features,
            label: Some(label),
        }
    }

    pub fn unlabeled(features: Vec<f64>) -> Self {
        Instance {
            features,
            label: None,
        }
    }

    pub fn dimensionality(&self) -> usize {
        self.features.len()
    }
}

/// Shape of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSpec {
    pub dimensionality: usize,
    pub num_classes: usize,
    pub length: usize,
}

impl StreamSpec {
    pub fn new(dimensionality: usize, num_classes: usize, length: usize) -> Result<Self> {
        let spec = StreamSpec {
            dimensionality,
            num_classes,
            length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensionality == 0 {
            return Err(Error::config("dimensionality must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("a stream needs at least 2 classes"));
        }
        Ok(())
    }
}

/// Uniform contract of every online classifier.
///
/// `predict` must not change the state and must work before any training;
/// untrained classifiers answer class 0. `Send` lets the harness move
/// independent states across worker threads.
pub trait Classifier: Send {
    fn dimensionality(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn predict(&self, features: &[f64]) -> Result<ClassId>;

    /// Learns from one labeled element.
    fn train(&mut self, instance: &Instance) -> Result<()>;

    /// Predicts `instance` and then trains on it. Must return what `predict`
    /// would have and leave the same state as `train`; implementations may
    /// share work between the two halves.
    fn test_then_train(&mut self, instance: &Instance) -> Result<ClassId> {
        let predicted = self.predict(&instance.features)?;
        self.train(instance)?;
        Ok(predicted)
    }

    /// Self-accounted footprint in bytes.
    fn memory_bytes(&self) -> usize;
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn dimensionality(&self) -> usize {
        (**self).dimensionality()
    }

    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        (**self).predict(features)
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        (**self).train(instance)
    }

    fn test_then_train(&mut self, instance: &Instance) -> Result<ClassId> {
        (**self).test_then_train(instance)
    }

    fn memory_bytes(&self) -> usize {
        (**self).memory_bytes()
    }
}

pub(crate) fn check_dim(expected: usize, features: &[f64]) -> Result<()> {
    if features.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: features.len(),
        });
    }
    Ok(())
}

/// Validates a training instance and returns its label.
pub(crate) fn training_label(
    instance: &Instance,
    dimensionality: usize,
    num_classes: usize,
) -> Result<ClassId> {
    check_dim(dimensionality, &instance.features)?;
    let label = instance
        .label
        .ok_or_else(|| Error::usage("cannot train on an unlabeled instance"))?;
    if label >= num_classes {
        return Err(Error::usage(format!(
            "label {label} outside [0, {num_classes})"
        )));
    }
    Ok(label)
}

/// Index of the largest score; ties go to the lowest index. NaN never wins.
pub fn argmax<I>(scores: I) -> ClassId
where
    I: IntoIterator<Item = f64>,
{
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
