//! Hoeffding tree with Gaussian Naive Bayes leaves.
//!
//! Leaves keep per-class Gaussian observers. Every `grace_period` elements a
//! leaf scores binary splits on ten evenly spaced thresholds per feature,
//! estimating each side's class mass from the Gaussian CDF, and splits when
//! the gain gap between the two best features beats the Hoeffding bound.
//! Internal nodes never change after creation.

use crate::error::{Error, Result};
use crate::model::{check_dim, training_label, ClassId, Classifier, Instance, COUNTER_BYTES, REAL_BYTES};
use crate::naive_bayes::GaussianStats;

/// Candidate thresholds evaluated per feature.
pub const SPLIT_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafLearner {
    NaiveBayes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingParams {
    /// Probability that the bound misjudges the gain deviation.
    pub delta: f64,
    pub grace_period: usize,
    /// Split anyway once the bound drops below this.
    pub tie_epsilon: f64,
    pub leaf_learner: LeafLearner,
}

impl Default for HoeffdingParams {
    fn default() -> Self {
        HoeffdingParams {
            delta: 0.01,
            grace_period: 10,
            tie_epsilon: 0.05,
            leaf_learner: LeafLearner::NaiveBayes,
        }
    }
}

impl HoeffdingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta must lie in (0, 1)"));
        }
        if self.grace_period < 1 {
            return Err(Error::config("grace_period must be at least 1"));
        }
        if !(self.tie_epsilon >= 0.0) {
            return Err(Error::config("tie_epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// ε = √(R² ln(1/δ) / 2n).
pub fn hoeffding_bound(range: f64, delta: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::usage("hoeffding bound needs n >= 1"));
    }
    if !(range > 0.0) {
        return Err(Error::usage("hoeffding bound needs a positive range"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::usage("hoeffding bound needs delta in (0, 1)"));
    }
    Ok((range * range * (1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Shannon entropy in bits of a (possibly fractional) count vector.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of splitting `parent` into `left` and `right`.
pub fn information_gain(parent: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let total: f64 = parent.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let wl: f64 = left.iter().sum::<f64>() / total;
    let wr: f64 = right.iter().sum::<f64>() / total;
    entropy(parent) - wl * entropy(left) - wr * entropy(right)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best candidate and the gain gap to the best candidate on another feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSuggestion {
    pub best: SplitCandidate,
    pub gap: f64,
}

#[derive(Debug, Clone)]
struct Leaf {
    stats: GaussianStats,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    since_attempt: usize,
}

impl Leaf {
    fn new(dim: usize, num_classes: usize) -> Self {
        Leaf {
            stats: GaussianStats::new(dim, num_classes),
            mins: vec![f64::INFINITY; dim],
            maxs: vec![f64::NEG_INFINITY; dim],
            since_attempt: 0,
        }
    }

    fn update(&mut self, features: &[f64], label: ClassId) {
        self.stats.update(features, label);
        for (f, &x) in features.iter().enumerate() {
            self.mins[f] = self.mins[f].min(x);
            self.maxs[f] = self.maxs[f].max(x);
        }
        self.since_attempt += 1;
    }

    fn record_bytes(dim: usize, num_classes: usize) -> usize {
        GaussianStats::record_bytes(dim, num_classes) + 2 * dim * REAL_BYTES + COUNTER_BYTES
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Leaf),
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        // The leaf this node replaced; kept, never consulted again.
        #[allow(dead_code)]
        former: Box<Leaf>,
    },
}

impl Node {
    const INTERNAL_RECORD_BYTES: usize = REAL_BYTES + 3 * COUNTER_BYTES;
}

/// Mass of a class's Gaussian observer at or below `threshold`.
fn mass_below(count: f64, mean: f64, variance: f64, threshold: f64) -> f64 {
    if variance <= 0.0 {
        return if mean <= threshold { count } else { 0.0 };
    }
    let z = (threshold - mean) / (2.0 * variance).sqrt();
    count * 0.5 * (1.0 + libm::erf(z))
}

/// Scores candidate splits from Gaussian observers.
///
/// `mins`/`maxs` bound the thresholds per feature. Returns `None` when the
/// statistics hold fewer than two classes or no feature has spread.
pub fn best_split(stats: &GaussianStats, mins: &[f64], maxs: &[f64]) -> Option<SplitSuggestion> {
    let k = stats.num_classes();
    let parent: Vec<f64> = stats.class_counts().iter().map(|&c| c as f64).collect();
    if parent.iter().filter(|&&c| c > 0.0).count() < 2 {
        return None;
    }
    let mut left = vec![0.0; k];
    let mut right = vec![0.0; k];
    let mut per_feature: Vec<SplitCandidate> = Vec::with_capacity(stats.dimensionality());
    for f in 0..stats.dimensionality() {
        let (lo, hi) = (mins[f], maxs[f]);
        if !(hi > lo) {
            continue;
        }
        let mut best: Option<SplitCandidate> = None;
        for i in 1..=SPLIT_CANDIDATES {
            let t = lo + (hi - lo) * i as f64 / (SPLIT_CANDIDATES + 1) as f64;
            for c in 0..k {
                let below = mass_below(parent[c], stats.mean(c, f), stats.variance(c, f), t);
                left[c] = below;
                right[c] = parent[c] - below;
            }
            let gain = information_gain(&parent, &left, &right);
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: t,
                    gain,
                });
            }
        }
        per_feature.extend(best);
    }
    let mut best: Option<SplitCandidate> = None;
    let mut second_gain = 0.0;
    for cand in per_feature {
        match best {
            Some(b) if cand.gain <= b.gain => second_gain = f64::max(second_gain, cand.gain),
            Some(b) => {
                second_gain = f64::max(second_gain, b.gain);
                best = Some(cand);
            }
            None => best = Some(cand),
        }
    }
    best.map(|b| SplitSuggestion {
        best: b,
        gap: b.gain - second_gain,
    })
}

#[derive(Debug, Clone)]
pub struct HoeffdingTree {
    params: HoeffdingParams,
    dim: usize,
    num_classes: usize,
    nodes: Vec<Node>,
    leaves: usize,
    internals: usize,
}

impl HoeffdingTree {
    pub fn new(dim: usize, num_classes: usize, params: HoeffdingParams) -> Result<Self> {
        params.validate()?;
        Ok(HoeffdingTree {
            params,
            dim,
            num_classes,
            nodes: vec![Node::Leaf(Leaf::new(dim, num_classes))],
            leaves: 1,
            internals: 0,
        })
    }

    pub fn params(&self) -> &HoeffdingParams {
        &self.params
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn internal_count(&self) -> usize {
        self.internals
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// (feature, threshold) of every internal node, in creation order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal {
                    feature, threshold, ..
                } => Some((*feature, *threshold)),
                Node::Leaf(_) => None,
            })
            .collect()
    }

    /// Information-gain range used in the bound.
    pub fn gain_range(&self) -> f64 {
        (self.num_classes as f64).log2()
    }

    fn leaf_index(&self, features: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if features[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn attempt_split(&mut self, index: usize) -> Result<()> {
        let range = self.gain_range();
        let Node::Leaf(leaf) = &mut self.nodes[index] else {
            unreachable!("split attempts only target leaves");
        };
        leaf.since_attempt = 0;
        let Some(suggestion) = best_split(&leaf.stats, &leaf.mins, &leaf.maxs) else {
            return Ok(());
        };
        let eps = hoeffding_bound(range, self.params.delta, leaf.stats.total())?;
        let decisive = suggestion.gap > eps || eps < self.params.tie_epsilon;
        if suggestion.best.gain <= 0.0 || !decisive {
            return Ok(());
        }
        let left = self.nodes.len();
        let right = left + 1;
        let fresh = Node::Internal {
            feature: suggestion.best.feature,
            threshold: suggestion.best.threshold,
            left,
            right,
            former: Box::new(Leaf::new(0, 0)),
        };
        let Node::Leaf(old) = std::mem::replace(&mut self.nodes[index], fresh) else {
            unreachable!();
        };
        if let Node::Internal { former, .. } = &mut self.nodes[index] {
            **former = old;
        }
        self.nodes.push(Node::Leaf(Leaf::new(self.dim, self.num_classes)));
        self.nodes.push(Node::Leaf(Leaf::new(self.dim, self.num_classes)));
        self.leaves += 1;
        self.internals += 1;
        Ok(())
    }
}

impl Classifier for HoeffdingTree {
    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        check_dim(self.dim, features)?;
        match &self.nodes[self.leaf_index(features)] {
            Node::Leaf(leaf) => Ok(leaf.stats.predict(features)),
            Node::Internal { .. } => unreachable!(),
        }
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        let label = training_label(instance, self.dim, self.num_classes)?;
        let index = self.leaf_index(&instance.features);
        let Node::Leaf(leaf) = &mut self.nodes[index] else {
            unreachable!();
        };
        leaf.update(&instance.features, label);
        if leaf.since_attempt >= self.params.grace_period {
            self.attempt_split(index)?;
        }
        Ok(())
    }

    /// Every split adds one internal record and two leaf records; the
    /// replaced leaf stays with its internal node.
    fn memory_bytes(&self) -> usize {
        let leaf = Leaf::record_bytes(self.dim, self.num_classes);
        self.leaves * leaf + self.internals * (leaf + Node::INTERNAL_RECORD_BYTES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naive_bayes::NaiveBayes;

    #[test]
    fn bound_closed_form() {
        let eps = hoeffding_bound(1.0, 0.01, 10).unwrap();
        assert!((eps - 0.479853).abs() < 1e-6, "{eps}");
        let quarter = hoeffding_bound(1.0, 0.01, 40).unwrap();
        assert!((quarter - eps / 2.0).abs() < 1e-12);
        let doubled = hoeffding_bound(2.0, 0.01, 10).unwrap();
        assert!((doubled - 2.0 * eps).abs() < 1e-12);
    }

    #[test]
    fn bound_domain_errors() {
        assert!(hoeffding_bound(1.0, 0.01, 0).is_err());
        assert!(hoeffding_bound(0.0, 0.01, 5).is_err());
        assert!(hoeffding_bound(1.0, 1.0, 5).is_err());
        assert!(hoeffding_bound(1.0, 0.0, 5).is_err());
    }

    fn stats_from(points: &[(Vec<f64>, usize)], classes: usize) -> (GaussianStats, Vec<f64>, Vec<f64>) {
        let dim = points[0].0.len();
        let mut leaf = Leaf::new(dim, classes);
        for (x, y) in points {
            leaf.update(x, *y);
        }
        (leaf.stats, leaf.mins, leaf.maxs)
    }

    /// Gain at a threshold, counting stored points exactly.
    fn exhaustive_gain(points: &[(Vec<f64>, usize)], classes: usize, f: usize, t: f64) -> f64 {
        let mut parent = vec![0.0; classes];
        let mut left = vec![0.0; classes];
        let mut right = vec![0.0; classes];
        for (x, y) in points {
            parent[*y] += 1.0;
            if x[f] <= t {
                left[*y] += 1.0;
            } else {
                right[*y] += 1.0;
            }
        }
        information_gain(&parent, &left, &right)
    }

    #[test]
    fn separable_leaf_gains_full_entropy() {
        let mut points = Vec::new();
        for i in 0..6 {
            points.push((vec![0.01 * i as f64], 0));
        }
        for i in 0..4 {
            points.push((vec![0.95 + 0.01 * i as f64], 1));
        }
        let (stats, mins, maxs) = stats_from(&points, 2);
        let s = best_split(&stats, &mins, &maxs).unwrap();
        let full = entropy(&[6.0, 4.0]);
        let oracle = exhaustive_gain(&points, 2, 0, s.best.threshold);
        assert!((oracle - full).abs() < 1e-12);
        assert!((s.best.gain - full).abs() < 1e-9, "{} vs {full}", s.best.gain);
        assert!((s.gap - full).abs() < 1e-9);
    }

    #[test]
    fn uninformative_feature_has_zero_gain() {
        // Both classes share the same distribution.
        let mut points = Vec::new();
        for i in 0..10 {
            points.push((vec![i as f64], 0));
            points.push((vec![i as f64], 1));
        }
        let (stats, mins, maxs) = stats_from(&points, 2);
        let s = best_split(&stats, &mins, &maxs).unwrap();
        assert!(s.best.gain.abs() < 1e-12);
    }

    #[test]
    fn identical_features_tie() {
        let mut points = Vec::new();
        for i in 0..10 {
            let x = i as f64 / 10.0;
            points.push((vec![x, x], usize::from(i >= 5)));
        }
        let (stats, mins, maxs) = stats_from(&points, 2);
        let s = best_split(&stats, &mins, &maxs).unwrap();
        assert_eq!(s.gap, 0.0);
        assert_eq!(s.best.feature, 0);
    }

    #[test]
    fn single_class_leaf_does_not_split() {
        let points: Vec<_> = (0..10).map(|i| (vec![i as f64], 1)).collect();
        let (stats, mins, maxs) = stats_from(&points, 2);
        assert!(best_split(&stats, &mins, &maxs).is_none());
    }

    fn separable(i: usize) -> Instance {
        // Class depends on whether the point sits left or right of 0.5.
        let x = ((i * 37) % 100) as f64 / 100.0;
        Instance::new(vec![x, 0.3], usize::from(x > 0.5))
    }

    #[test]
    fn no_attempt_inside_grace_period() {
        let mut ht = HoeffdingTree::new(2, 2, HoeffdingParams::default()).unwrap();
        for i in 0..9 {
            ht.train(&separable(i)).unwrap();
        }
        assert_eq!(ht.leaf_count(), 1);
        let Node::Leaf(leaf) = &ht.nodes[0] else { panic!() };
        assert_eq!(leaf.since_attempt, 9);
    }

    #[test]
    fn first_split_matches_bound() {
        let params = HoeffdingParams {
            tie_epsilon: 0.0,
            ..HoeffdingParams::default()
        };
        let mut ht = HoeffdingTree::new(2, 2, params.clone()).unwrap();
        // Replay the same stream through a standalone leaf to find the first
        // attempt where the gap exceeds the closed-form bound.
        let mut shadow = Leaf::new(2, 2);
        let mut expected = None;
        for i in 0..500 {
            let x = separable(i);
            shadow.update(&x.features, x.label.unwrap());
            if expected.is_none() && (i + 1) % params.grace_period == 0 {
                if let Some(s) = best_split(&shadow.stats, &shadow.mins, &shadow.maxs) {
                    let n = (i + 1) as f64;
                    let eps = (0.01f64.recip().ln() / (2.0 * n)).sqrt();
                    if s.gap > eps {
                        expected = Some(i + 1);
                    }
                }
            }
        }
        let expected = expected.expect("separable stream must split");
        for i in 0..500 {
            ht.train(&separable(i)).unwrap();
            if i + 1 < expected {
                assert_eq!(ht.leaf_count(), 1, "premature split at {}", i + 1);
            }
            if i + 1 == expected {
                assert_eq!(ht.leaf_count(), 2);
                break;
            }
        }
        assert_eq!(ht.splits()[0].0, 0);
    }

    #[test]
    fn internal_nodes_are_static_and_memory_steps() {
        let mut ht = HoeffdingTree::new(2, 2, HoeffdingParams::default()).unwrap();
        let leaf = Leaf::record_bytes(2, 2);
        let mut splits = Vec::new();
        let mut prev_mem = ht.memory_bytes();
        let mut prev_internals = 0;
        for i in 0..3000 {
            ht.train(&separable(i)).unwrap();
            let now = ht.splits();
            assert_eq!(&now[..splits.len()], &splits[..]);
            splits = now;
            let mem = ht.memory_bytes();
            let grew = ht.internal_count() - prev_internals;
            assert_eq!(mem - prev_mem, grew * (2 * leaf + Node::INTERNAL_RECORD_BYTES));
            prev_mem = mem;
            prev_internals = ht.internal_count();
        }
        assert!(ht.internal_count() >= 1);
    }

    #[test]
    fn pure_split_predicts_each_side() {
        let mut ht = HoeffdingTree::new(2, 2, HoeffdingParams::default()).unwrap();
        for i in 0..400 {
            ht.train(&separable(i)).unwrap();
        }
        assert!(ht.internal_count() >= 1);
        assert_eq!(ht.predict(&[0.1, 0.3]).unwrap(), 0);
        assert_eq!(ht.predict(&[0.9, 0.3]).unwrap(), 1);
    }

    #[test]
    fn untrained_predicts_zero() {
        let ht = HoeffdingTree::new(3, 5, HoeffdingParams::default()).unwrap();
        assert_eq!(ht.predict(&[0.0, 1.0, 2.0]).unwrap(), 0);
    }

    #[test]
    fn matches_naive_bayes_before_first_split() {
        let params = HoeffdingParams {
            grace_period: 1_000_000,
            ..HoeffdingParams::default()
        };
        let mut ht = HoeffdingTree::new(2, 3, params).unwrap();
        let mut nb = NaiveBayes::new(2, 3);
        for i in 0..300 {
            let x = Instance::new(vec![(i % 7) as f64, ((i * 13) % 11) as f64 * 0.1], i % 3);
            assert_eq!(ht.predict(&x.features).unwrap(), nb.predict(&x.features).unwrap());
            ht.train(&x).unwrap();
            nb.train(&x).unwrap();
        }
        assert_eq!(ht.leaf_count(), 1);
    }

    #[test]
    fn invalid_params() {
        let bad = HoeffdingParams {
            delta: 1.5,
            ..HoeffdingParams::default()
        };
        assert!(HoeffdingTree::new(2, 2, bad).is_err());
        let bad = HoeffdingParams {
            grace_period: 0,
            ..HoeffdingParams::default()
        };
        assert!(HoeffdingTree::new(2, 2, bad).is_err());
    }
}
