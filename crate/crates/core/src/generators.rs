//! Seeded synthetic streams over hyperplane, random RBF and random tree
//! concepts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ClassId, Instance, StreamSpec};
use crate::seed::{self, Purpose};

pub const DEFAULT_LENGTH: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneParams {
    /// Plane normal; drawn from U[0,1] per feature when absent.
    pub weights: Option<Vec<f64>>,
    /// Offset; half the weight sum when absent.
    pub threshold: Option<f64>,
    /// Share of labels flipped.
    pub noise: f64,
}

impl Default for HyperplaneParams {
    fn default() -> Self {
        HyperplaneParams {
            weights: None,
            threshold: None,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfParams {
    pub centroids: usize,
    /// Probability mass per class; uniform when empty.
    pub class_weights: Vec<f64>,
    /// Per-centroid spread is drawn from U[0, max_spread).
    pub max_spread: f64,
}

impl Default for RbfParams {
    fn default() -> Self {
        RbfParams {
            centroids: 50,
            class_weights: vec![0.4, 0.6],
            max_spread: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { depth: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    Hyperplane(HyperplaneParams),
    RandomRbf(RbfParams),
    RandomTree(TreeParams),
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Hyperplane(_) => "hyperplane",
            GeneratorKind::RandomRbf(_) => "randomrbf",
            GeneratorKind::RandomTree(_) => "randomtree",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hyperplane" => Some(GeneratorKind::Hyperplane(HyperplaneParams::default())),
            "randomrbf" => Some(GeneratorKind::RandomRbf(RbfParams::default())),
            "randomtree" => Some(GeneratorKind::RandomTree(TreeParams::default())),
            _ => None,
        }
    }

    fn default_shape(&self) -> (usize, usize) {
        match self {
            GeneratorKind::Hyperplane(_) | GeneratorKind::RandomRbf(_) => (3, 2),
            GeneratorKind::RandomTree(_) => (6, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Fixes the concept (plane, centroids, tree).
    pub seed: u64,
    /// Fixes the sequence of draws from the concept; derived from `seed`
    /// when absent.
    pub sample_seed: Option<u64>,
    pub shape: StreamSpec,
}

impl GeneratorSpec {
    /// Default shape and length for `kind`.
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        let (dimensionality, num_classes) = kind.default_shape();
        GeneratorSpec {
            kind,
            seed,
            sample_seed: None,
            shape: StreamSpec {
                dimensionality,
                num_classes,
                length: DEFAULT_LENGTH,
            },
        }
    }

    pub fn hyperplane(seed: u64) -> Self {
        Self::new(GeneratorKind::Hyperplane(HyperplaneParams::default()), seed)
    }

    pub fn randomrbf(seed: u64) -> Self {
        Self::new(GeneratorKind::RandomRbf(RbfParams::default()), seed)
    }

    pub fn randomtree(seed: u64) -> Self {
        Self::new(GeneratorKind::RandomTree(TreeParams::default()), seed)
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.shape.length = length;
        self
    }

    pub fn with_sample_seed(mut self, seed: u64) -> Self {
        self.sample_seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.shape.length == 0 {
            return Err(Error::config("generator length must be positive"));
        }
        let d = self.shape.dimensionality;
        match &self.kind {
            GeneratorKind::Hyperplane(p) => {
                if p.shape_mismatch(d) {
                    return Err(Error::Dimension {
                        expected: d,
                        got: p.weights.as_ref().map_or(0, Vec::len),
                    });
                }
                if !(0.0..=1.0).contains(&p.noise) {
                    return Err(Error::config("hyperplane noise must lie in [0, 1]"));
                }
                if self.shape.num_classes != 2 {
                    return Err(Error::config("hyperplane streams have 2 classes"));
                }
            }
            GeneratorKind::RandomRbf(p) => {
                if p.centroids < self.shape.num_classes {
                    return Err(Error::config("randomrbf needs at least one centroid per class"));
                }
                if !p.class_weights.is_empty() && p.class_weights.len() != self.shape.num_classes {
                    return Err(Error::config("one class weight per class"));
                }
                if p.class_weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::config("class weights must be positive"));
                }
                if !(p.max_spread >= 0.0) {
                    return Err(Error::config("spread must be non-negative"));
                }
            }
            GeneratorKind::RandomTree(p) => {
                if p.depth == 0 || p.depth > 20 {
                    return Err(Error::config("randomtree depth must lie in [1, 20]"));
                }
            }
        }
        Ok(())
    }

    /// The instance iterator for this spec.
    pub fn stream(&self) -> Result<Generator> {
        self.validate()?;
        let mut concept_rng = ChaCha8Rng::seed_from_u64(seed::derive(self.seed, 0, Purpose::Generator));
        let sample_seed = self.sample_seed.unwrap_or_else(|| seed::derive(self.seed, 1, Purpose::Generator));
        let rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let d = self.shape.dimensionality;
        let concept = match &self.kind {
            GeneratorKind::Hyperplane(p) => {
                let weights = match &p.weights {
                    Some(w) => w.clone(),
                    None => (0..d).map(|_| concept_rng.random::<f64>()).collect(),
                };
                let threshold = p.threshold.unwrap_or_else(|| weights.iter().sum::<f64>() / 2.0);
                Concept::Hyperplane {
                    weights,
                    threshold,
                    noise: p.noise,
                }
            }
            GeneratorKind::RandomRbf(p) => Concept::Rbf(RbfConcept::random(p, d, self.shape.num_classes, &mut concept_rng)),
            GeneratorKind::RandomTree(p) => {
                Concept::Tree(TreeConcept::random(p.depth, d, self.shape.num_classes, &mut concept_rng))
            }
        };
        Ok(Generator {
            concept,
            rng,
            dim: d,
            remaining: self.shape.length,
        })
    }

    /// Materialises the whole stream.
    pub fn generate(&self) -> Result<Vec<Instance>> {
        Ok(self.stream()?.collect())
    }
}

impl HyperplaneParams {
    fn shape_mismatch(&self, d: usize) -> bool {
        self.weights.as_ref().is_some_and(|w| w.len() != d)
    }
}

/// Node of a random tree concept, stored in a flat vector with children
/// referenced by index.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(ClassId),
}

/// A labelling tree; element 0 is the root. `x[feature] < threshold` goes
/// left.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConcept {
    pub nodes: Vec<TreeNode>,
}

impl TreeConcept {
    /// Full binary tree of `depth`. Each split picks a random feature and a
    /// threshold uniform inside the cell that reaches it; leaf classes cycle
    /// through all classes in shuffled order.
    pub fn random(depth: usize, dim: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let leaves = 1usize << depth;
        let mut classes: Vec<ClassId> = (0..leaves).map(|i| i % num_classes).collect();
        classes.shuffle(rng);
        let mut nodes = Vec::with_capacity(2 * leaves - 1);
        let mut cell = vec![(0.0, 1.0); dim];
        build(&mut nodes, depth, &mut cell, &mut classes.into_iter(), rng);
        TreeConcept { nodes }
    }

    pub fn classify(&self, x: &[f64]) -> ClassId {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(c) => return c,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn leaf_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf(c) => Some(*c),
            TreeNode::Split { .. } => None,
        })
    }
}

fn build(
    nodes: &mut Vec<TreeNode>,
    depth: usize,
    cell: &mut [(f64, f64)],
    classes: &mut impl Iterator<Item = ClassId>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let id = nodes.len();
    if depth == 0 {
        nodes.push(TreeNode::Leaf(classes.next().unwrap_or(0)));
        return id;
    }
    let feature = rng.random_range(0..cell.len());
    let (lo, hi) = cell[feature];
    let threshold = lo + rng.random::<f64>() * (hi - lo);
    nodes.push(TreeNode::Leaf(0));
    cell[feature] = (lo, threshold);
    let left = build(nodes, depth - 1, cell, classes, rng);
    cell[feature] = (threshold, hi);
    let right = build(nodes, depth - 1, cell, classes, rng);
    cell[feature] = (lo, hi);
    nodes[id] = TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub center: Vec<f64>,
    pub class: ClassId,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfConcept {
    pub centroids: Vec<Centroid>,
    /// Cumulative selection probabilities aligned with `centroids`.
    cumulative: Vec<f64>,
}

impl RbfConcept {
    fn random(p: &RbfParams, dim: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut class_of: Vec<ClassId> = (0..p.centroids).map(|i| i % num_classes).collect();
        class_of.shuffle(rng);
        let centroids: Vec<Centroid> = class_of
            .into_iter()
            .map(|class| Centroid {
                center: (0..dim).map(|_| rng.random::<f64>()).collect(),
                class,
                spread: rng.random::<f64>() * p.max_spread,
            })
            .collect();
        let raw: Vec<f64> = centroids.iter().map(|_| rng.random::<f64>() + f64::EPSILON).collect();
        let class_weight = |c: ClassId| {
            if p.class_weights.is_empty() {
                1.0 / num_classes as f64
            } else {
                p.class_weights[c] / p.class_weights.iter().sum::<f64>()
            }
        };
        let mut class_total = vec![0.0; num_classes];
        for (c, w) in centroids.iter().zip(&raw) {
            class_total[c.class] += w;
        }
        let mut acc = 0.0;
        let cumulative = centroids
            .iter()
            .zip(&raw)
            .map(|(c, w)| {
                acc += class_weight(c.class) * w / class_total[c.class];
                acc
            })
            .collect();
        RbfConcept { centroids, cumulative }
    }

    /// Probability of drawing centroid `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.cumulative[i] - if i == 0 { 0.0 } else { self.cumulative[i - 1] }
    }

    fn pick(&self, u: f64) -> &Centroid {
        let u = u * self.cumulative.last().copied().unwrap_or(1.0);
        let i = self.cumulative.partition_point(|&c| c <= u);
        &self.centroids[i.min(self.centroids.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Concept {
    Hyperplane {
        weights: Vec<f64>,
        threshold: f64,
        noise: f64,
    },
    Rbf(RbfConcept),
    Tree(TreeConcept),
}

/// Iterator over a generated stream.
#[derive(Debug, Clone)]
pub struct Generator {
    concept: Concept,
    rng: ChaCha8Rng,
    dim: usize,
    remaining: usize,
}

impl Generator {
    pub fn tree(&self) -> Option<&TreeConcept> {
        match &self.concept {
            Concept::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn rbf(&self) -> Option<&RbfConcept> {
        match &self.concept {
            Concept::Rbf(r) => Some(r),
            _ => None,
        }
    }

    /// Normal and offset of a hyperplane concept.
    pub fn plane(&self) -> Option<(&[f64], f64)> {
        match &self.concept {
            Concept::Hyperplane { weights, threshold, .. } => Some((weights, *threshold)),
            _ => None,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

impl Iterator for Generator {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let Generator { concept, rng, dim, .. } = self;
        let x = match concept {
            Concept::Hyperplane {
                weights,
                threshold,
                noise,
            } => {
                let x = uniform(rng, *dim);
                let dot: f64 = weights.iter().zip(&x).map(|(w, v)| w * v).sum();
                let mut label = usize::from(dot >= *threshold);
                if rng.random::<f64>() < *noise {
                    label = 1 - label;
                }
                Instance::new(x, label)
            }
            Concept::Rbf(rbf) => {
                let c = rbf.pick(rng.random::<f64>());
                let mut dir: Vec<f64> = (0..*dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = rng.sample::<f64, _>(StandardNormal) * c.spread;
                if norm > 0.0 {
                    for v in &mut dir {
                        *v *= radius / norm;
                    }
                }
                let x = c.center.iter().zip(&dir).map(|(m, o)| m + o).collect();
                Instance::new(x, c.class)
            }
            Concept::Tree(tree) => {
                let x = uniform(rng, *dim);
                let label = tree.classify(&x);
                Instance::new(x, label)
            }
        };
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Generator {}
