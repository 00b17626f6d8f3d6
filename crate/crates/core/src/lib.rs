//! Memory-constrained online classifiers and a prequential benchmark
//! harness.
//!
//! Every classifier implements [`Classifier`]: `predict` tests an element,
//! `train` learns from it, and `memory_bytes` reports a self-accounted
//! footprint (8 bytes per real, 4 per counter or id).
//!
//! ```
//! use streambench::{GeneratorSpec, NaiveBayes, Prequential};
//!
//! let data = GeneratorSpec::hyperplane(1).with_length(1_000).generate().unwrap();
//! let mut nb = NaiveBayes::new(3, 2);
//! let report = Prequential::default().run(&mut nb, &data).unwrap();
//! assert_eq!(report.timeline.len(), 20);
//! ```

// `!(x > 0.0)` checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod error;
pub mod eval;
pub mod features;
pub mod fnn;
pub mod generators;
pub mod hoeffding;
pub mod mcnn;
pub mod model;
pub mod mondrian;
pub mod naive_bayes;
pub mod par;
pub mod seed;

pub use baselines::{EmptyClassifier, KnnModel};
pub use error::{Error, Result};
pub use eval::{ConfusionState, Prequential, RunReport};
pub use fnn::{Fnn, FnnParams};
pub use generators::GeneratorSpec;
pub use hoeffding::{HoeffdingParams, HoeffdingTree};
pub use mcnn::{Mcnn, McnnParams, McnnVariant};
pub use model::{ClassId, Classifier, Instance, StreamSpec};
pub use mondrian::{MondrianForest, MondrianParams};
pub use naive_bayes::NaiveBayes;
pub use par::Execution;
