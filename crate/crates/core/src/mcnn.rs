//! Micro-Cluster Nearest Neighbour.
//!
//! Instances are absorbed into labelled micro-clusters; prediction returns
//! the label of the nearest centroid. Misclassifications charge error
//! counters, and a cluster whose counter passes the threshold is split in
//! two along its highest-variance attribute. The two variants differ only
//! in how clusters leave: `Origin` drops every cluster whose participation
//! fell below a threshold after each update, `OrpailleCC` evicts the least
//! participating cluster only when a split needs a slot.

use crate::error::{Error, Result};
use crate::model::{check_dim, training_label, ClassId, Classifier, Instance, COUNTER_BYTES, REAL_BYTES};

/// Participation of a new cluster, and the cap for absorbing clusters.
pub const INITIAL_PARTICIPATION: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McnnVariant {
    Origin,
    OrpailleCC,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McnnParams {
    pub variant: McnnVariant,
    pub error_threshold: u32,
    /// Only consulted by [`McnnVariant::Origin`].
    pub participation_threshold: i64,
    pub max_clusters: usize,
}

impl McnnParams {
    pub fn origin() -> Self {
        McnnParams {
            variant: McnnVariant::Origin,
            error_threshold: 2,
            participation_threshold: 50,
            max_clusters: 40,
        }
    }

    pub fn orpaillecc() -> Self {
        McnnParams {
            variant: McnnVariant::OrpailleCC,
            ..Self::origin()
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.error_threshold < 1 {
            return Err(Error::config("error_threshold must be at least 1"));
        }
        if self.max_clusters < num_classes {
            return Err(Error::config(format!(
                "max_clusters ({}) must be at least the class count ({num_classes})",
                self.max_clusters
            )));
        }
        Ok(())
    }
}

/// Snapshot of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroCluster {
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean, per attribute.
    pub sq_devs: Vec<f64>,
    pub count: u64,
    pub label: ClassId,
    pub errors: u32,
    pub participation: i64,
    /// Creation sequence number; lower is older.
    pub created: u64,
}

impl MicroCluster {
    /// Cluster summarising `points` under `label`.
    pub fn from_points(points: &[Vec<f64>], label: ClassId, created: u64) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let n = points.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|f| points.iter().map(|p| p[f]).sum::<f64>() / n).collect();
        let sq_devs = (0..dim)
            .map(|f| points.iter().map(|p| (p[f] - mean[f]) * (p[f] - mean[f])).sum())
            .collect();
        MicroCluster {
            mean,
            sq_devs,
            count: points.len() as u64,
            label,
            errors: 0,
            participation: INITIAL_PARTICIPATION,
            created,
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.mean.clone()
    }

    /// Population variance per attribute.
    pub fn variance(&self, feature: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.sq_devs[feature] / self.count as f64).max(0.0)
    }

    /// Accounted size of one cluster slot: mean and squared deviations per
    /// attribute, plus count, label, errors, participation and creation id.
    pub fn record_bytes(dim: usize) -> usize {
        2 * dim * REAL_BYTES + 5 * COUNTER_BYTES
    }
}

/// Splits a cluster along its highest-variance attribute.
///
/// Children sit one standard deviation either side of the parent centroid,
/// share the count (`⌈n/2⌉`, `⌊n/2⌋`), keep the parent's per-attribute
/// variance, and start with zero errors. Returns `None` when `count < 2`.
pub fn split_cluster(cluster: &MicroCluster, created: (u64, u64)) -> Option<(MicroCluster, MicroCluster)> {
    if cluster.count < 2 {
        return None;
    }
    let dim = cluster.mean.len();
    let variances: Vec<f64> = (0..dim).map(|f| cluster.variance(f)).collect();
    let axis = crate::model::argmax(variances.iter().copied());
    let offset = variances[axis].sqrt();
    let child = |count: u64, sign: f64, created: u64| {
        let mut mean = cluster.mean.clone();
        mean[axis] += sign * offset;
        MicroCluster {
            mean,
            sq_devs: variances.iter().map(|v| v * count as f64).collect(),
            count,
            label: cluster.label,
            errors: 0,
            participation: INITIAL_PARTICIPATION,
            created,
        }
    };
    let high = cluster.count.div_ceil(2);
    let low = cluster.count / 2;
    Some((child(high, -1.0, created.0), child(low, 1.0, created.1)))
}

fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(m, v)| (m - v) * (m - v)).sum()
}

/// Linear scan for both nearest clusters with the width known at compile
/// time. Indices are `usize::MAX` when nothing matched; a NaN distance
/// still claims an empty slot.
fn scan<const D: usize>(means: &[f64], labels: &[ClassId], x: &[f64], label: ClassId) -> (usize, usize) {
    let x: &[f64; D] = x.try_into().expect("dimension checked");
    let (mut overall, mut overall_d) = (usize::MAX, f64::INFINITY);
    let (mut same, mut same_d) = (usize::MAX, f64::INFINITY);
    for (i, (m, &l)) in means.chunks_exact(D).zip(labels).enumerate() {
        let mut d = 0.0;
        for f in 0..D {
            let t = m[f] - x[f];
            d += t * t;
        }
        if d < overall_d || overall == usize::MAX {
            overall = i;
            overall_d = d;
        }
        if l == label && (d < same_d || same == usize::MAX) {
            same = i;
            same_d = d;
        }
    }
    (overall, same)
}

fn scan_any(dim: usize, means: &[f64], labels: &[ClassId], x: &[f64], label: ClassId) -> (usize, usize) {
    let (mut overall, mut overall_d) = (usize::MAX, f64::INFINITY);
    let (mut same, mut same_d) = (usize::MAX, f64::INFINITY);
    for (i, (m, &l)) in means.chunks_exact(dim).zip(labels).enumerate() {
        let d = distance_sq(m, x);
        if d < overall_d || overall == usize::MAX {
            overall = i;
            overall_d = d;
        }
        if l == label && (d < same_d || same == usize::MAX) {
            same = i;
            same_d = d;
        }
    }
    (overall, same)
}

/// Cluster table stored column-wise, in creation order.
#[derive(Debug, Clone, Default)]
struct Table {
    dim: usize,
    means: Vec<f64>,
    sq_devs: Vec<f64>,
    count: Vec<u64>,
    label: Vec<ClassId>,
    errors: Vec<u32>,
    // Participation plus the tick it was last set at; the current value is
    // `key - tick`, so idle decay costs nothing per step.
    participation_key: Vec<i64>,
    created: Vec<u64>,
    tick: i64,
}

impl Table {
    fn with_capacity(dim: usize, capacity: usize) -> Self {
        Table {
            dim,
            means: Vec::with_capacity(dim * capacity),
            sq_devs: Vec::with_capacity(dim * capacity),
            count: Vec::with_capacity(capacity),
            label: Vec::with_capacity(capacity),
            errors: Vec::with_capacity(capacity),
            participation_key: Vec::with_capacity(capacity),
            created: Vec::with_capacity(capacity),
            tick: 0,
        }
    }

    fn len(&self) -> usize {
        self.count.len()
    }

    fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, c: MicroCluster) {
        self.means.extend(&c.mean);
        self.sq_devs.extend(&c.sq_devs);
        self.count.push(c.count);
        self.label.push(c.label);
        self.errors.push(c.errors);
        self.participation_key.push(c.participation + self.tick);
        self.created.push(c.created);
    }

    fn get(&self, i: usize) -> MicroCluster {
        let d = self.dim;
        MicroCluster {
            mean: self.mean(i).to_vec(),
            sq_devs: self.sq_devs[i * d..(i + 1) * d].to_vec(),
            count: self.count[i],
            label: self.label[i],
            errors: self.errors[i],
            participation: self.participation_key[i] - self.tick,
            created: self.created[i],
        }
    }

    fn remove(&mut self, i: usize) -> MicroCluster {
        let c = self.get(i);
        let d = self.dim;
        self.means.drain(i * d..(i + 1) * d);
        self.sq_devs.drain(i * d..(i + 1) * d);
        self.count.remove(i);
        self.label.remove(i);
        self.errors.remove(i);
        self.participation_key.remove(i);
        self.created.remove(i);
        c
    }

    /// Welford update of cluster `i` with `x`.
    fn absorb(&mut self, i: usize, x: &[f64]) {
        let d = self.dim;
        self.count[i] += 1;
        let n = self.count[i] as f64;
        let means = &mut self.means[i * d..(i + 1) * d];
        let devs = &mut self.sq_devs[i * d..(i + 1) * d];
        for ((m, q), &v) in means.iter_mut().zip(devs).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *q += delta * (v - *m);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mcnn {
    params: McnnParams,
    dim: usize,
    num_classes: usize,
    table: Table,
    next_id: u64,
}

impl Mcnn {
    pub fn new(dim: usize, num_classes: usize, params: McnnParams) -> Result<Self> {
        params.validate(num_classes)?;
        Ok(Mcnn {
            table: Table::with_capacity(dim, params.max_clusters),
            params,
            dim,
            num_classes,
            next_id: 0,
        })
    }

    pub fn params(&self) -> &McnnParams {
        &self.params
    }

    pub fn cluster_count(&self) -> usize {
        self.table.len()
    }

    /// Snapshot of every cluster, oldest first.
    pub fn clusters(&self) -> Vec<MicroCluster> {
        (0..self.table.len()).map(|i| self.table.get(i)).collect()
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id - 1
    }

    /// Nearest cluster overall and nearest cluster of `label`.
    fn nearest(&self, x: &[f64], label: ClassId) -> (Option<usize>, Option<usize>) {
        let (means, labels) = (&self.table.means, &self.table.label);
        let (overall, same) = match self.dim {
            1 => scan::<1>(means, labels, x, label),
            2 => scan::<2>(means, labels, x, label),
            3 => scan::<3>(means, labels, x, label),
            4 => scan::<4>(means, labels, x, label),
            6 => scan::<6>(means, labels, x, label),
            8 => scan::<8>(means, labels, x, label),
            _ => scan_any(self.dim, means, labels, x, label),
        };
        let found = |i: usize| (i != usize::MAX).then_some(i);
        (found(overall), found(same))
    }

    fn split_at(&mut self, index: usize) {
        if self.table.count[index] < 2 {
            self.table.errors[index] = 0;
            return;
        }
        let target = self.table.created[index];
        if self.table.len() == self.params.max_clusters {
            match self.params.variant {
                McnnVariant::Origin => {
                    self.table.errors[index] = 0;
                    return;
                }
                McnnVariant::OrpailleCC => self.evict_least_participating(target),
            }
        }
        let index = self
            .table
            .created
            .iter()
            .position(|&c| c == target)
            .expect("split target is never evicted");
        let ids = (self.fresh_id(), self.fresh_id());
        let parent = self.table.remove(index);
        let (a, b) = split_cluster(&parent, ids).expect("count checked");
        self.table.push(a);
        self.table.push(b);
    }

    /// Removes the lowest-participation cluster (oldest on ties), sparing
    /// the cluster created at `spare`.
    fn evict_least_participating(&mut self, spare: u64) {
        let t = &self.table;
        let victim = (0..t.len())
            .filter(|&i| t.created[i] != spare)
            .min_by_key(|&i| (t.participation_key[i], t.created[i]));
        if let Some(i) = victim {
            self.table.remove(i);
        }
    }
}

impl Classifier for Mcnn {
    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        check_dim(self.dim, features)?;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, &l) in self.table.means.chunks_exact(self.dim).zip(&self.table.label) {
            let d = distance_sq(m, features);
            if d < best_d {
                best = l;
                best_d = d;
            }
        }
        Ok(best)
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        self.test_then_train(instance).map(|_| ())
    }

    /// The nearest cluster found for training is also the prediction.
    fn test_then_train(&mut self, instance: &Instance) -> Result<ClassId> {
        let label = training_label(instance, self.dim, self.num_classes)?;
        let x = &instance.features;
        let (overall, same) = self.nearest(x, label);
        let predicted = overall.map_or(0, |i| self.table.label[i]);

        self.table.tick += 1;
        let tick = self.table.tick;
        match same {
            Some(i) => {
                self.table.absorb(i, x);
                let key = &mut self.table.participation_key[i];
                *key = (*key - tick + 2).min(INITIAL_PARTICIPATION) + tick;
            }
            None if self.table.len() < self.params.max_clusters => {
                let id = self.fresh_id();
                self.table.push(MicroCluster::from_points(std::slice::from_ref(x), label, id));
            }
            None => {}
        }
        let mut charged = [None, None];
        if let Some(wrong) = overall.filter(|&i| self.table.label[i] != label) {
            self.table.errors[wrong] += 1;
            charged[0] = Some(self.table.created[wrong]);
            if let Some(i) = same {
                self.table.errors[i] += 1;
                charged[1] = Some(self.table.created[i]);
            }
        }
        // Only the clusters charged above can have passed the threshold;
        // handle them in table order.
        let threshold = self.params.error_threshold;
        let position = |t: &Table, id: u64| t.created.iter().position(|&c| c == id);
        if let [Some(a), Some(b)] = charged {
            if position(&self.table, b) < position(&self.table, a) {
                charged.swap(0, 1);
            }
        }
        for id in charged.into_iter().flatten() {
            if let Some(i) = position(&self.table, id) {
                if self.table.errors[i] > threshold {
                    self.split_at(i);
                }
            }
        }

        if self.params.variant == McnnVariant::Origin {
            let floor = self.params.participation_threshold + tick;
            while let Some(i) = self.table.participation_key.iter().position(|&k| k < floor) {
                self.table.remove(i);
            }
        }
        Ok(predicted)
    }

    /// Cluster slots are reserved up front.
    fn memory_bytes(&self) -> usize {
        self.params.max_clusters * MicroCluster::record_bytes(self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train_all(m: &mut Mcnn, pts: &[(Vec<f64>, usize)]) {
        for (x, y) in pts {
            m.train(&Instance::new(x.clone(), *y)).unwrap();
        }
    }

    fn cluster(points: &[Vec<f64>], created: u64) -> MicroCluster {
        MicroCluster {
            errors: 3,
            ..MicroCluster::from_points(points, 0, created)
        }
    }

    #[test]
    fn predicts_nearest_centroid() {
        let mut m = Mcnn::new(2, 2, McnnParams::orpaillecc()).unwrap();
        assert_eq!(m.predict(&[5.0, 5.0]).unwrap(), 0);
        train_all(&mut m, &[(vec![10.0, 10.0], 1), (vec![0.0, 0.0], 0)]);
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 0);
        assert_eq!(m.predict(&[9.0, 9.0]).unwrap(), 1);
        // Equidistant: the older cluster (label 1) wins.
        assert_eq!(m.predict(&[5.0, 5.0]).unwrap(), 1);
    }

    #[test]
    fn one_class_one_cluster() {
        let mut m = Mcnn::new(2, 3, McnnParams::origin()).unwrap();
        for i in 0..200 {
            m.train(&Instance::new(vec![i as f64 * 0.01, 1.0], 2)).unwrap();
        }
        assert_eq!(m.clusters().len(), 1);
        assert_eq!(m.clusters()[0].count, 200);
        assert_eq!(m.clusters()[0].errors, 0);
    }

    #[test]
    fn separated_classes_stay_pure() {
        let mut m = Mcnn::new(2, 2, McnnParams::orpaillecc()).unwrap();
        for i in 0..100 {
            let y = i % 2;
            let jitter = (i as f64 * 0.37).sin() * 0.1;
            let x = if y == 0 { vec![jitter, -jitter] } else { vec![5.0 + jitter, 5.0] };
            m.train(&Instance::new(x, y)).unwrap();
        }
        assert_eq!(m.clusters().len(), 2);
        assert_eq!(m.clusters()[0].label, 0);
        assert_eq!(m.clusters()[1].label, 1);
        assert_eq!(m.clusters()[0].count, 50);
        assert_eq!(m.clusters()[1].count, 50);
    }

    #[test]
    fn split_fires_past_threshold() {
        let params = McnnParams {
            error_threshold: 2,
            ..McnnParams::orpaillecc()
        };
        let mut m = Mcnn::new(1, 2, params).unwrap();
        // Class-0 cluster spread over [0, 2]; class-1 points inside it are
        // misclassified and charge it.
        train_all(&mut m, &[(vec![0.0], 0), (vec![2.0], 0), (vec![10.0], 1)]);
        // The first class-1 point already landed nearest the class-0 cluster.
        assert_eq!(m.clusters()[0].errors, 1);
        train_all(&mut m, &[(vec![1.0], 1)]);
        assert_eq!(m.clusters()[0].errors, 2);
        assert_eq!(m.clusters().len(), 2);
        train_all(&mut m, &[(vec![1.0], 1)]);
        // Third error exceeds the threshold of 2: the class-0 cluster split.
        let all = m.clusters();
        let zeros: Vec<_> = all.iter().filter(|c| c.label == 0).collect();
        assert_eq!(zeros.len(), 2);
        assert!(zeros.iter().all(|c| c.errors == 0));
    }

    #[test]
    fn split_axis_and_symmetry() {
        // Variance only on feature 3: values 0, 2, 2, 4 (mean 2, variance 2).
        let pts: Vec<Vec<f64>> = [0.0, 2.0, 2.0, 4.0].iter().map(|&v| vec![1.0, 1.0, 1.0, v]).collect();
        let c = cluster(&pts, 0);
        let (a, b) = split_cluster(&c, (1, 2)).unwrap();
        let (ca, cb) = (a.centroid(), b.centroid());
        assert!((ca[3] - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((cb[3] - (2.0 + 2f64.sqrt())).abs() < 1e-12);
        for f in 0..3 {
            assert_eq!(ca[f], 1.0);
            assert_eq!(cb[f], 1.0);
        }
        assert!(((ca[3] + cb[3]) / 2.0 - 2.0).abs() < 1e-12);
        assert_eq!((a.errors, b.errors), (0, 0));
        assert_eq!((a.label, b.label), (0, 0));
    }

    #[test]
    fn split_halves_counts() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let c = cluster(&pts, 0);
        let (a, b) = split_cluster(&c, (1, 2)).unwrap();
        assert_eq!((a.count, b.count), (3, 2));
        assert!((a.variance(1) - c.variance(1)).abs() < 1e-12);
        let single = cluster(&[vec![1.0]], 0);
        assert!(split_cluster(&single, (1, 2)).is_none());
    }

    #[test]
    fn orpaillecc_never_exceeds_capacity() {
        let params = McnnParams {
            max_clusters: 4,
            error_threshold: 1,
            ..McnnParams::orpaillecc()
        };
        let mut m = Mcnn::new(2, 3, params).unwrap();
        let mut s = 1u64;
        for i in 0..2000 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (s >> 33) as f64 / (1u64 << 31) as f64;
            let b = ((s >> 13) & 0xffff) as f64 / 65536.0;
            m.train(&Instance::new(vec![a, b], i % 3)).unwrap();
            assert!(m.cluster_count() <= 4);
            assert_eq!(m.memory_bytes(), 4 * MicroCluster::record_bytes(2));
        }
    }

    #[test]
    fn orpaillecc_keeps_clusters_below_capacity() {
        let mut m = Mcnn::new(1, 2, McnnParams::orpaillecc()).unwrap();
        train_all(&mut m, &[(vec![0.0], 0), (vec![5.0], 1)]);
        for _ in 0..500 {
            train_all(&mut m, &[(vec![0.0], 0)]);
        }
        // The idle class-1 cluster decays but is never evicted.
        assert_eq!(m.clusters().len(), 2);
        assert!(m.clusters()[1].participation < 0);
    }

    #[test]
    fn origin_drops_idle_cluster_on_schedule() {
        let mut m = Mcnn::new(1, 2, McnnParams::origin()).unwrap();
        train_all(&mut m, &[(vec![0.0], 0)]);
        // Participation 100 after creation; each idle call costs 1 and the
        // cluster is dropped once it sinks below 50, i.e. on idle call 51.
        for k in 1..=51 {
            train_all(&mut m, &[(vec![100.0], 1)]);
            let alive = m.clusters().iter().any(|c| c.label == 0);
            assert_eq!(alive, k < 51, "idle call {k}");
        }
    }

    #[test]
    fn fused_step_matches_predict_then_train() {
        let params = McnnParams {
            max_clusters: 6,
            ..McnnParams::orpaillecc()
        };
        let mut fused = Mcnn::new(2, 3, params.clone()).unwrap();
        let mut plain = Mcnn::new(2, 3, params).unwrap();
        for i in 0..3000u64 {
            let x = vec![((i * 7919) % 101) as f64 / 10.0, ((i * 104_729) % 37) as f64 / 4.0];
            let y = ((i * 31) % 3) as usize;
            let inst = Instance::new(x.clone(), y);
            let expected = plain.predict(&x).unwrap();
            plain.train(&inst).unwrap();
            assert_eq!(fused.test_then_train(&inst).unwrap(), expected);
        }
        assert_eq!(fused.clusters(), plain.clusters());
    }

    #[test]
    fn memory_accounting() {
        let params = McnnParams {
            max_clusters: 8,
            ..McnnParams::orpaillecc()
        };
        let m = Mcnn::new(12, 2, params).unwrap();
        assert_eq!(MicroCluster::record_bytes(12), 12 * 2 * 8 + 20);
        assert_eq!(m.memory_bytes(), 8 * MicroCluster::record_bytes(12));
    }

    #[test]
    fn rejects_bad_params() {
        let p = McnnParams {
            max_clusters: 3,
            ..McnnParams::origin()
        };
        assert!(Mcnn::new(2, 5, p).is_err());
        let p = McnnParams {
            error_threshold: 0,
            ..McnnParams::origin()
        };
        assert!(Mcnn::new(2, 2, p).is_err());
    }
}
