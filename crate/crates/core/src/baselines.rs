//! Measurement baselines: the empty classifier and an offline k-NN.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::ConfusionState;
use crate::model::{check_dim, training_label, ClassId, Classifier, Instance};
use crate::par::{self, Execution};

/// Predicts class 0 and learns nothing. Runtime zero point.
#[derive(Debug, Clone)]
pub struct EmptyClassifier {
    dim: usize,
    num_classes: usize,
}

impl EmptyClassifier {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        EmptyClassifier { dim, num_classes }
    }
}

impl Classifier for EmptyClassifier {
    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        check_dim(self.dim, features)?;
        Ok(0)
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        training_label(instance, self.dim, self.num_classes)?;
        Ok(())
    }

    fn memory_bytes(&self) -> usize {
        0
    }
}

/// Default k search range.
pub const K_RANGE: (usize, usize) = (2, 20);

/// Brute-force k-nearest-neighbour model over stored training instances.
#[derive(Debug, Clone)]
pub struct KnnModel {
    points: Vec<Vec<f64>>,
    labels: Vec<ClassId>,
    num_classes: usize,
    k: usize,
}

fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    pub fn fit(train: &[Instance], num_classes: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        if train.len() < k {
            return Err(Error::usage(format!(
                "k = {k} exceeds the {} training instances",
                train.len()
            )));
        }
        let dim = train[0].dimensionality();
        let mut points = Vec::with_capacity(train.len());
        let mut labels = Vec::with_capacity(train.len());
        for x in train {
            labels.push(training_label(x, dim, num_classes)?);
            points.push(x.features.clone());
        }
        Ok(KnnModel {
            points,
            labels,
            num_classes,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimensionality(&self) -> usize {
        self.points[0].len()
    }

    /// Labels of the `k` nearest stored points, ordered by (distance, class).
    fn neighbours(&self, x: &[f64], k: usize) -> Vec<ClassId> {
        let mut scored: Vec<(f64, ClassId)> = self
            .points
            .iter()
            .zip(&self.labels)
            .map(|(p, &y)| (distance_sq(p, x), y))
            .collect();
        let by_key = |a: &(f64, ClassId), b: &(f64, ClassId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_key);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_key);
        scored.into_iter().map(|(_, y)| y).collect()
    }

    fn vote(&self, neighbours: &[ClassId]) -> ClassId {
        let mut votes = vec![0usize; self.num_classes];
        for &y in neighbours {
            votes[y] += 1;
        }
        crate::model::argmax(votes.into_iter().map(|v| v as f64))
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        check_dim(self.dimensionality(), x)?;
        Ok(self.vote(&self.neighbours(x, self.k)))
    }

    pub fn predict_batch(&self, exec: Execution, xs: &[Instance]) -> Result<Vec<ClassId>> {
        par::map(exec, xs.iter().collect(), |x| self.predict(&x.features))
            .into_iter()
            .collect()
    }

    /// Macro-F1 of the model on a labelled set.
    pub fn score(&self, exec: Execution, xs: &[Instance]) -> Result<f64> {
        let preds = self.predict_batch(exec, xs)?;
        let mut cm = ConfusionState::new(self.num_classes);
        for (x, p) in xs.iter().zip(preds) {
            cm.record(x.label.ok_or_else(|| Error::usage("scoring needs labels"))?, p);
        }
        Ok(cm.macro_f1().unwrap_or(0.0))
    }
}

/// Result of a k grid search.
#[derive(Debug, Clone)]
pub struct GridSearch {
    pub model: KnnModel,
    /// (k, validation macro-F1) for every k tried.
    pub scores: Vec<(usize, f64)>,
}

/// Fits one model per k in `k_range` (inclusive) and keeps the k with the
/// best validation macro-F1; ties go to the smallest k.
pub fn knn_grid_search(
    exec: Execution,
    train: &[Instance],
    validation: &[Instance],
    num_classes: usize,
    k_range: (usize, usize),
) -> Result<GridSearch> {
    let (k_min, k_max) = k_range;
    if k_min == 0 || k_min > k_max {
        return Err(Error::usage("k range must be non-empty and start at 1 or more"));
    }
    if train.len() < k_min || validation.is_empty() {
        return Err(Error::usage(format!(
            "grid search needs at least {k_min} training and 1 validation instances"
        )));
    }
    let k_max = k_max.min(train.len());
    let full = KnnModel::fit(train, num_classes, k_max)?;
    // Neighbour lists up to k_max, shared by every k.
    let lists: Vec<Vec<ClassId>> = par::map(exec, validation.iter().collect(), |x| {
        full.neighbours(&x.features, k_max)
    });
    let mut scores = Vec::new();
    for k in k_min..=k_max {
        let mut cm = ConfusionState::new(num_classes);
        for (x, list) in validation.iter().zip(&lists) {
            let truth = x.label.ok_or_else(|| Error::usage("validation needs labels"))?;
            cm.record(truth, full.vote(&list[..k]));
        }
        scores.push((k, cm.macro_f1().unwrap_or(0.0)));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    let model = KnnModel {
        k: best.0,
        ..full
    };
    Ok(GridSearch { model, scores })
}

/// Outcome of the offline reference protocol.
#[derive(Debug, Clone)]
pub struct OfflineReport {
    pub k: usize,
    pub validation_f1: f64,
    pub evaluation_f1: f64,
}

/// Offline k-NN reference: a seeded 10 % / 90 % train/evaluation split, with
/// 20 % of the training part held out to pick k.
pub fn offline_knn(
    exec: Execution,
    data: &[Instance],
    num_classes: usize,
    k_range: (usize, usize),
    seed: u64,
) -> Result<OfflineReport> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_len = data.len() / 10;
    let val_len = train_len / 5;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let validation = pick(&order[..val_len]);
    let train = pick(&order[val_len..train_len]);
    let evaluation = pick(&order[train_len..]);
    let search = knn_grid_search(exec, &train, &validation, num_classes, k_range)?;
    let validation_f1 = search
        .scores
        .iter()
        .find(|(k, _)| *k == search.model.k())
        .map(|s| s.1)
        .unwrap_or(0.0);
    // Refit on the whole training part with the chosen k.
    let mut full_train = train;
    full_train.extend(validation);
    let model = KnnModel::fit(&full_train, num_classes, search.model.k())?;
    Ok(OfflineReport {
        k: model.k(),
        validation_f1,
        evaluation_f1: model.score(exec, &evaluation)?,
    })
}
