//! Memory-bounded online Mondrian forest.
//!
//! Every tree draws its nodes from one [`NodeArena`] sized from a byte
//! budget at construction. Trees grow by Mondrian block extension: a point
//! landing outside a node's box races an exponential clock against the
//! node's split time, and wins create a new parent above that node. Once
//! the arena cannot hand out two more slots, structure is frozen and only
//! boxes and class counts keep updating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{check_dim, training_label, ClassId, Classifier, Instance, COUNTER_BYTES, REAL_BYTES};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct MondrianParams {
    pub tree_count: usize,
    /// Pseudo-count spread uniformly over classes at the root.
    pub base_count: f64,
    /// Weight of the parent posterior in each child, in [0, 1).
    pub discount_factor: f64,
    /// Lifetime of each tree; larger budgets allow deeper trees.
    pub budget: f64,
    pub memory_bytes: usize,
}

impl Default for MondrianParams {
    fn default() -> Self {
        MondrianParams {
            tree_count: 10,
            base_count: 0.0,
            discount_factor: 0.6,
            budget: 0.4,
            memory_bytes: 600 * 1024,
        }
    }
}

impl MondrianParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count < 1 {
            return Err(Error::config("tree_count must be at least 1"));
        }
        if !(self.base_count >= 0.0) {
            return Err(Error::config("base_count must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.discount_factor) {
            return Err(Error::config("discount_factor must lie in [0, 1)"));
        }
        if !(self.budget > 0.0) {
            return Err(Error::config("budget must be positive"));
        }
        if self.memory_bytes == 0 {
            return Err(Error::config("memory_bytes must be positive"));
        }
        Ok(())
    }
}

/// Fixed-capacity structure-of-arrays node store.
#[derive(Debug, Clone)]
pub struct NodeArena {
    dim: usize,
    num_classes: usize,
    capacity: usize,
    len: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    split_value: Vec<f64>,
    split_time: Vec<f64>,
    counts: Vec<u32>,
    parent: Vec<u32>,
    left: Vec<u32>,
    right: Vec<u32>,
    tree: Vec<u32>,
    feature: Vec<u32>,
}

impl NodeArena {
    /// Bytes charged per node: box bounds, split value and split time as
    /// reals, one counter per class, and five ids (parent, left, right,
    /// tree, split feature).
    pub fn record_bytes(dim: usize, num_classes: usize) -> usize {
        (2 * dim + 2) * REAL_BYTES + num_classes * COUNTER_BYTES + 5 * COUNTER_BYTES
    }

    pub fn with_budget(memory_bytes: usize, dim: usize, num_classes: usize) -> Self {
        let capacity = memory_bytes / Self::record_bytes(dim, num_classes);
        NodeArena {
            dim,
            num_classes,
            capacity,
            len: 0,
            lower: vec![0.0; capacity * dim],
            upper: vec![0.0; capacity * dim],
            split_value: vec![0.0; capacity],
            split_time: vec![0.0; capacity],
            counts: vec![0; capacity * num_classes],
            parent: vec![NONE; capacity],
            left: vec![NONE; capacity],
            right: vec![NONE; capacity],
            tree: vec![NONE; capacity],
            feature: vec![NONE; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn free(&self) -> usize {
        self.capacity - self.len
    }

    /// Hands out a fresh leaf with an empty box, or `None` when full.
    fn alloc(&mut self, tree: usize, split_time: f64) -> Option<usize> {
        if self.len == self.capacity {
            return None;
        }
        let id = self.len;
        self.len += 1;
        self.lower[id * self.dim..(id + 1) * self.dim].fill(f64::INFINITY);
        self.upper[id * self.dim..(id + 1) * self.dim].fill(f64::NEG_INFINITY);
        self.split_time[id] = split_time;
        self.tree[id] = tree as u32;
        Some(id)
    }

    pub fn lower(&self, id: usize) -> &[f64] {
        &self.lower[id * self.dim..(id + 1) * self.dim]
    }

    pub fn upper(&self, id: usize) -> &[f64] {
        &self.upper[id * self.dim..(id + 1) * self.dim]
    }

    pub fn counts(&self, id: usize) -> &[u32] {
        &self.counts[id * self.num_classes..(id + 1) * self.num_classes]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.left[id] == NONE
    }

    pub fn tree_of(&self, id: usize) -> usize {
        self.tree[id] as usize
    }

    pub fn split(&self, id: usize) -> Option<(usize, f64)> {
        (!self.is_leaf(id)).then(|| (self.feature[id] as usize, self.split_value[id]))
    }

    fn child_for(&self, id: usize, x: &[f64]) -> usize {
        let f = self.feature[id] as usize;
        if x[f] <= self.split_value[id] {
            self.left[id] as usize
        } else {
            self.right[id] as usize
        }
    }

    fn extend_box(&mut self, id: usize, x: &[f64]) {
        let row = id * self.dim;
        for (d, &v) in x.iter().enumerate() {
            let lo = &mut self.lower[row + d];
            *lo = lo.min(v);
            let hi = &mut self.upper[row + d];
            *hi = hi.max(v);
        }
    }

    fn add_count(&mut self, id: usize, label: ClassId) {
        self.counts[id * self.num_classes + label] += 1;
    }
}

/// Samples a split inside a box: feature chosen with probability
/// proportional to its range, value uniform within that range.
///
/// Returns `None` when every range is zero.
pub fn sample_split<R: Rng + ?Sized>(lower: &[f64], upper: &[f64], rng: &mut R) -> Option<(usize, f64)> {
    let total: f64 = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| (hi - lo).max(0.0))
        .sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut chosen = None;
    for (d, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        let r = (hi - lo).max(0.0);
        if r <= 0.0 {
            continue;
        }
        chosen = Some(d);
        if target < r {
            break;
        }
        target -= r;
    }
    let d = chosen?;
    let value = lower[d] + rng.random::<f64>() * (upper[d] - lower[d]);
    Some((d, value.clamp(lower[d], upper[d])))
}

#[derive(Debug, Clone)]
pub struct MondrianForest {
    params: MondrianParams,
    dim: usize,
    num_classes: usize,
    arena: NodeArena,
    roots: Vec<usize>,
    rngs: Vec<ChaCha8Rng>,
    ext_lower: Vec<f64>,
    ext_upper: Vec<f64>,
}

impl MondrianForest {
    pub fn new(dim: usize, num_classes: usize, params: MondrianParams, seed: u64) -> Result<Self> {
        let seeds = (0..params.tree_count as u64)
            .map(|t| crate::seed::derive(seed, t, crate::seed::Purpose::Tree))
            .collect();
        Self::with_tree_seeds(dim, num_classes, params, seeds)
    }

    /// Builds a forest with one explicit RNG seed per tree.
    pub fn with_tree_seeds(dim: usize, num_classes: usize, params: MondrianParams, seeds: Vec<u64>) -> Result<Self> {
        params.validate()?;
        if seeds.len() != params.tree_count {
            return Err(Error::config("one seed per tree is required"));
        }
        let mut arena = NodeArena::with_budget(params.memory_bytes, dim, num_classes);
        if arena.capacity() < params.tree_count {
            return Err(Error::config(format!(
                "{} bytes hold {} nodes, fewer than the {} roots",
                params.memory_bytes,
                arena.capacity(),
                params.tree_count
            )));
        }
        let roots = (0..params.tree_count)
            .map(|t| arena.alloc(t, params.budget).expect("capacity checked"))
            .collect();
        Ok(MondrianForest {
            dim,
            num_classes,
            arena,
            roots,
            rngs: seeds.into_iter().map(ChaCha8Rng::seed_from_u64).collect(),
            ext_lower: vec![0.0; dim],
            ext_upper: vec![0.0; dim],
            params,
        })
    }

    pub fn params(&self) -> &MondrianParams {
        &self.params
    }

    pub fn arena(&self) -> &NodeArena {
        &self.arena
    }

    pub fn node_count(&self) -> usize {
        self.arena.len()
    }

    pub fn tree_count(&self) -> usize {
        self.roots.len()
    }

    pub fn root(&self, tree: usize) -> usize {
        self.roots[tree]
    }

    /// Nodes belonging to one tree.
    pub fn tree_size(&self, tree: usize) -> usize {
        (0..self.arena.len()).filter(|&i| self.arena.tree_of(i) == tree).count()
    }

    /// Node ids visited from the root to the leaf that `x` routes to.
    pub fn path(&self, tree: usize, x: &[f64]) -> Vec<usize> {
        let mut id = self.roots[tree];
        let mut path = vec![id];
        while !self.arena.is_leaf(id) {
            id = self.arena.child_for(id, x);
            path.push(id);
        }
        path
    }

    fn train_tree(&mut self, tree: usize, x: &[f64], label: ClassId) {
        let mut id = self.roots[tree];
        let mut parent_time = 0.0;
        loop {
            let arena = &self.arena;
            let lower = arena.lower(id);
            let upper = arena.upper(id);
            // A node with an empty box has never seen data: it takes the point.
            let fresh = lower[0] > upper[0];
            let mut rate = 0.0;
            if !fresh {
                for d in 0..self.dim {
                    let (lo, hi, v) = (lower[d], upper[d], x[d]);
                    let (el, eu) = if v < lo {
                        (v, lo)
                    } else if v > hi {
                        (hi, v)
                    } else {
                        (lo, lo)
                    };
                    self.ext_lower[d] = el;
                    self.ext_upper[d] = eu;
                    rate += eu - el;
                }
            }
            let rng = &mut self.rngs[tree];
            if rate > 0.0 && self.arena.free() >= 2 {
                let e: f64 = rng.sample::<f64, _>(Exp1) / rate;
                let split_time = parent_time + e;
                if split_time < self.arena.split_time[id] {
                    if let Some((feature, value)) = sample_split(&self.ext_lower, &self.ext_upper, rng) {
                        self.insert_parent(tree, id, x, label, feature, value, split_time);
                        return;
                    }
                }
            }
            self.arena.extend_box(id, x);
            self.arena.add_count(id, label);
            if self.arena.is_leaf(id) {
                return;
            }
            parent_time = self.arena.split_time[id];
            id = self.arena.child_for(id, x);
        }
    }

    /// Places a new split node above `node` separating it from a new leaf
    /// holding `x`.
    #[allow(clippy::too_many_arguments)]
    fn insert_parent(
        &mut self,
        tree: usize,
        node: usize,
        x: &[f64],
        label: ClassId,
        feature: usize,
        value: f64,
        split_time: f64,
    ) {
        let budget = self.params.budget;
        let arena = &mut self.arena;
        let parent = arena.alloc(tree, split_time).expect("two free slots checked");
        let leaf = arena.alloc(tree, budget).expect("two free slots checked");

        let dim = arena.dim;
        let k = arena.num_classes;
        arena.lower.copy_within(node * dim..(node + 1) * dim, parent * dim);
        arena.upper.copy_within(node * dim..(node + 1) * dim, parent * dim);
        arena.extend_box(parent, x);
        arena.extend_box(leaf, x);
        arena.counts.copy_within(node * k..(node + 1) * k, parent * k);
        arena.add_count(parent, label);
        arena.add_count(leaf, label);

        arena.feature[parent] = feature as u32;
        arena.split_value[parent] = value;
        if x[feature] <= value {
            arena.left[parent] = leaf as u32;
            arena.right[parent] = node as u32;
        } else {
            arena.left[parent] = node as u32;
            arena.right[parent] = leaf as u32;
        }

        let grand = arena.parent[node];
        arena.parent[parent] = grand;
        arena.parent[node] = parent as u32;
        arena.parent[leaf] = parent as u32;
        if grand == NONE {
            self.roots[tree] = parent;
        } else {
            let g = grand as usize;
            if arena.left[g] == node as u32 {
                arena.left[g] = parent as u32;
            } else {
                arena.right[g] = parent as u32;
            }
        }
    }

    /// Smoothed class posterior of one tree at `x`, written into `out`.
    pub fn tree_posterior(&self, tree: usize, x: &[f64], out: &mut [f64]) {
        let k = self.num_classes;
        let uniform = 1.0 / k as f64;
        let d = self.params.discount_factor;
        let base = self.params.base_count;
        let mut id = self.roots[tree];

        let counts = self.arena.counts(id);
        let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() + base;
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = if total > 0.0 {
                (c as f64 + base * uniform) / total
            } else {
                uniform
            };
        }
        while !self.arena.is_leaf(id) {
            id = self.arena.child_for(id, x);
            let counts = self.arena.counts(id);
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            if total == 0 {
                continue;
            }
            let total = total as f64;
            for (o, &c) in out.iter_mut().zip(counts) {
                *o = (1.0 - d) * (c as f64 / total) + d * *o;
            }
        }
    }

    /// Posterior averaged over all trees.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let k = self.num_classes;
        let mut acc = vec![0.0; k];
        let mut buf = vec![0.0; k];
        for t in 0..self.roots.len() {
            self.tree_posterior(t, x, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        let n = self.roots.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

impl Classifier for MondrianForest {
    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        check_dim(self.dim, features)?;
        Ok(crate::model::argmax(self.posterior(features)))
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        let label = training_label(instance, self.dim, self.num_classes)?;
        for t in 0..self.roots.len() {
            self.train_tree(t, &instance.features, label);
        }
        Ok(())
    }

    /// The arena is allocated up front, so the footprint is the budget.
    fn memory_bytes(&self) -> usize {
        self.params.memory_bytes
    }
}
