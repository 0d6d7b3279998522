//! C4.5-style decision tree: gain-ratio induction over numeric and
//! categorical features, pessimistic subtree-replacement pruning, and
//! prediction with class distributions.
//!
//! Splits are binary: `value <= threshold` for numeric features (thresholds
//! are midpoints between consecutive distinct values) and `value == code`
//! for categorical ones. The split maximizing gain ratio wins, among
//! candidates with positive gain and at least `min_leaf` instances per
//! side. All tie-breaks are value-based, so training is invariant to
//! instance order.

mod model_io;

pub use model_io::ModelFormatError;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::features::{FeatureVector, LabeledInstance, CIPHER_SUITE_FEATURE_INDEX, FEATURE_COUNT};

/// Gains below this are treated as zero so that float noise never
/// fabricates a split candidate.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("entropy of empty counts")]
    EmptyCounts,
    #[error(transparent)]
    Format(#[from] ModelFormatError),
}

/// Labeled instances plus the ordered label vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    instances: Vec<LabeledInstance>,
    labels: Vec<String>,
    label_idx: Vec<u32>,
}

impl Dataset {
    /// Builds the dataset; the vocabulary is the sorted set of distinct
    /// labels, independent of instance order.
    pub fn from_instances(instances: Vec<LabeledInstance>) -> Self {
        let mut labels: Vec<String> = instances
            .iter()
            .map(|i| i.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        labels.shrink_to_fit();
        let label_idx = instances
            .iter()
            .map(|i| labels.binary_search(&i.label).expect("label in vocab") as u32)
            .collect();
        Dataset {
            instances,
            labels,
            label_idx,
        }
    }

    /// Drops every label with fewer than `min` instances, rebuilding the
    /// vocabulary.
    pub fn filter_min_instances(&self, min: usize) -> Dataset {
        let mut counts = vec![0usize; self.labels.len()];
        for &l in &self.label_idx {
            counts[l as usize] += 1;
        }
        let keep: Vec<LabeledInstance> = self
            .instances
            .iter()
            .zip(&self.label_idx)
            .filter(|(_, &l)| counts[l as usize] >= min)
            .map(|(i, _)| i.clone())
            .collect();
        Dataset::from_instances(keep)
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, instance: usize) -> u32 {
        self.label_idx[instance]
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Training knobs; defaults match the classic C4.5 configuration.
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub min_leaf: usize,
    pub prune: bool,
    pub confidence: f64,
    /// Features split by equality instead of threshold.
    pub categorical_features: BTreeSet<usize>,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            min_leaf: 2,
            prune: true,
            confidence: 0.25,
            categorical_features: BTreeSet::from([CIPHER_SUITE_FEATURE_INDEX]),
        }
    }
}

/// The test at an internal node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitTest {
    /// Numeric: left if `value <= threshold`.
    Le(f64),
    /// Categorical: left if `value == code`, unseen codes go right.
    Eq(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        test: SplitTest,
        left: u32,
        right: u32,
    },
    Leaf {
        label: u32,
        /// Sparse class distribution, sorted by label index.
        counts: Vec<(u32, u32)>,
        /// Training instances at this leaf not of the majority class.
        errors: u32,
    },
}

/// A trained tree. Immutable; safe to share across threads for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    labels: Vec<String>,
    nodes: Vec<Node>,
}

/// Prediction outcome, borrowing from the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<'a> {
    pub label: &'a str,
    /// Majority fraction at the leaf, in (0, 1].
    pub confidence: f64,
    /// Class distribution at the leaf: (label name, count).
    pub class_counts: Vec<(&'a str, u32)>,
}

/// Shannon entropy in bits of a class-count distribution.
pub fn entropy(counts: &[u32]) -> Result<f64, ClassifierError> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(ClassifierError::EmptyCounts);
    }
    Ok(entropy_unchecked(counts, total))
}

fn entropy_unchecked(counts: &[u32], total: u64) -> f64 {
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h
}

/// A qualifying split of one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub test: SplitTest,
    pub gain: f64,
    pub gain_ratio: f64,
}

/// Best split of `feature` over the instances selected by `indices`:
/// the candidate maximizing gain ratio among those with positive gain and
/// `min_leaf` instances on both sides. Ties break toward the smaller
/// threshold or code. `None` when no candidate qualifies.
pub fn best_split(
    data: &Dataset,
    indices: &[u32],
    feature: usize,
    is_categorical: bool,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let s = data.labels.len();
    let mut total_counts = vec![0u32; s];
    let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(n);
    for &i in indices {
        let label = data.label_idx[i as usize];
        total_counts[label as usize] += 1;
        pairs.push((data.instances[i as usize].features[feature], label));
    }
    if total_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let parent_entropy = entropy_unchecked(&total_counts, n as u64);

    let mut best: Option<SplitCandidate> = None;
    let mut consider = |test: SplitTest, left_counts: &[u32], n_left: usize| {
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            return;
        }
        let right_counts: Vec<u32> = total_counts
            .iter()
            .zip(left_counts)
            .map(|(&t, &l)| t - l)
            .collect();
        let wl = n_left as f64 / n as f64;
        let wr = n_right as f64 / n as f64;
        let gain = parent_entropy
            - wl * entropy_unchecked(left_counts, n_left as u64)
            - wr * entropy_unchecked(&right_counts, n_right as u64);
        if gain <= MIN_GAIN {
            return;
        }
        let split_info = -(wl * wl.log2() + wr * wr.log2());
        let gain_ratio = gain / split_info;
        // Candidates arrive in ascending threshold/code order, so a strict
        // comparison keeps the smaller value on ties.
        if best.is_none_or(|b| gain_ratio > b.gain_ratio) {
            best = Some(SplitCandidate {
                test,
                gain,
                gain_ratio,
            });
        }
    };

    if is_categorical {
        let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        distinct.dedup();
        for &code in &distinct {
            let mut left_counts = vec![0u32; s];
            let mut n_left = 0;
            for &(v, l) in &pairs {
                if v == code {
                    left_counts[l as usize] += 1;
                    n_left += 1;
                }
            }
            consider(SplitTest::Eq(code), &left_counts, n_left);
        }
    } else {
        let mut left_counts = vec![0u32; s];
        for i in 0..n - 1 {
            left_counts[pairs[i].1 as usize] += 1;
            if pairs[i].0 < pairs[i + 1].0 {
                let threshold = (pairs[i].0 + pairs[i + 1].0) / 2.0;
                consider(SplitTest::Le(threshold), &left_counts, i + 1);
            }
        }
    }
    best
}

struct BuildCtx<'a> {
    data: &'a Dataset,
    params: &'a TrainParams,
}

enum BuildNode {
    Leaf {
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        test: SplitTest,
        counts: Vec<u32>,
        left: Box<BuildNode>,
        right: Box<BuildNode>,
    },
}

/// Trains a tree. Deterministic: the same instances (in any order) and
/// params produce a predict-equivalent tree.
pub fn train(data: &Dataset, params: &TrainParams) -> Result<DecisionTree, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let ctx = BuildCtx { data, params };
    let indices: Vec<u32> = (0..data.len() as u32).collect();
    let mut root = build(&ctx, indices);
    if params.prune {
        let z = inverse_normal_cdf(1.0 - params.confidence);
        prune(&mut root, z);
    }
    let mut nodes = Vec::new();
    flatten(&root, data.labels.len(), &mut nodes);
    Ok(DecisionTree {
        labels: data.labels.clone(),
        nodes,
    })
}

fn build(ctx: &BuildCtx<'_>, indices: Vec<u32>) -> BuildNode {
    let s = ctx.data.labels.len();
    let mut counts = vec![0u32; s];
    for &i in &indices {
        counts[ctx.data.label_idx[i as usize] as usize] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || indices.len() < 2 * ctx.params.min_leaf {
        return BuildNode::Leaf { counts };
    }

    let mut chosen: Option<(usize, SplitCandidate)> = None;
    for feature in 0..FEATURE_COUNT {
        let is_cat = ctx.params.categorical_features.contains(&feature);
        if let Some(cand) = best_split(
            ctx.data,
            &indices,
            feature,
            is_cat,
            ctx.params.min_leaf,
        ) {
            // Strict comparison: the smallest feature index wins ties.
            if chosen.as_ref().is_none_or(|(_, c)| cand.gain_ratio > c.gain_ratio) {
                chosen = Some((feature, cand));
            }
        }
    }
    let Some((feature, cand)) = chosen else {
        return BuildNode::Leaf { counts };
    };

    let goes_left = |i: u32| {
        let v = ctx.data.instances[i as usize].features[feature];
        match cand.test {
            SplitTest::Le(t) => v <= t,
            SplitTest::Eq(c) => v == c,
        }
    };
    let (left_idx, right_idx): (Vec<u32>, Vec<u32>) =
        indices.into_iter().partition(|&i| goes_left(i));
    let left = Box::new(build(ctx, left_idx));
    let right = Box::new(build(ctx, right_idx));
    BuildNode::Split {
        feature,
        test: cand.test,
        counts,
        left,
        right,
    }
}

/// Pessimistic error estimate of a node taken as a leaf, in error counts:
/// `n` times the upper confidence bound on the observed error fraction.
fn pessimistic_errors(counts: &[u32], z: f64) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    let max = counts.iter().copied().max().unwrap_or(0) as u64;
    let errors = (n - max) as f64;
    let n = n as f64;
    let f = errors / n;
    let z2 = z * z;
    let bound = (f + z2 / (2.0 * n) + z * (f / n - f * f / n + z2 / (4.0 * n * n)).sqrt())
        / (1.0 + z2 / n);
    n * bound
}

/// Bottom-up subtree replacement: a subtree collapses to a leaf when the
/// leaf's pessimistic error bound does not exceed the subtree's. Returns
/// the estimate of the (possibly replaced) node.
fn prune(node: &mut BuildNode, z: f64) -> f64 {
    match node {
        BuildNode::Leaf { counts } => pessimistic_errors(counts, z),
        BuildNode::Split {
            counts, left, right, ..
        } => {
            let subtree = prune(left, z) + prune(right, z);
            let as_leaf = pessimistic_errors(counts, z);
            if as_leaf <= subtree {
                *node = BuildNode::Leaf {
                    counts: std::mem::take(counts),
                };
                as_leaf
            } else {
                subtree
            }
        }
    }
}

fn flatten(node: &BuildNode, s: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    match node {
        BuildNode::Leaf { counts } => {
            let max = counts.iter().copied().max().unwrap_or(0);
            // Vocabulary is lexicographically sorted, so the first maximal
            // index is the lexicographically smallest label.
            let label = counts.iter().position(|&c| c == max).unwrap_or(0) as u32;
            let total: u32 = counts.iter().sum();
            let sparse: Vec<(u32, u32)> = (0..s as u32)
                .zip(counts.iter().copied())
                .filter(|(_, c)| *c > 0)
                .collect();
            nodes.push(Node::Leaf {
                label,
                counts: sparse,
                errors: total - max,
            });
        }
        BuildNode::Split {
            feature,
            test,
            left,
            right,
            ..
        } => {
            nodes.push(Node::Split {
                feature: *feature,
                test: *test,
                left: 0,
                right: 0,
            });
            let l = flatten(left, s, nodes);
            let r = flatten(right, s, nodes);
            if let Node::Split { left, right, .. } = &mut nodes[id as usize] {
                *left = l;
                *right = r;
            }
        }
    }
    id
}

impl DecisionTree {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Walks the tree. Total: every 36-vector reaches exactly one leaf;
    /// categorical tests send unseen codes down the not-equal branch.
    pub fn predict(&self, fv: &FeatureVector) -> Prediction<'_> {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let v = fv[*feature];
                    let goes_left = match test {
                        SplitTest::Le(t) => v <= *t,
                        SplitTest::Eq(c) => v == *c,
                    };
                    id = if goes_left { *left } else { *right } as usize;
                }
                Node::Leaf { label, counts, .. } => {
                    let total: u32 = counts.iter().map(|(_, c)| c).sum();
                    let majority = counts
                        .iter()
                        .find(|(l, _)| l == label)
                        .map(|(_, c)| *c)
                        .unwrap_or(0);
                    return Prediction {
                        label: &self.labels[*label as usize],
                        confidence: if total > 0 {
                            majority as f64 / total as f64
                        } else {
                            1.0
                        },
                        class_counts: counts
                            .iter()
                            .map(|(l, c)| (self.labels[*l as usize].as_str(), *c))
                            .collect(),
                    };
                }
            }
        }
    }
}

/// Inverse of the standard normal CDF by Acklam's rational approximation,
/// absolute error below 1.2e-9 over (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile must be in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::InstanceMeta;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn inst(label: &str, edits: &[(usize, f64)]) -> LabeledInstance {
        let mut v = [0f64; FEATURE_COUNT];
        for &(i, x) in edits {
            v[i] = x;
        }
        LabeledInstance {
            features: FeatureVector(v),
            label: label.into(),
            meta: InstanceMeta::default(),
        }
    }

    fn dataset(rows: &[(&str, &[(usize, f64)])]) -> Dataset {
        Dataset::from_instances(rows.iter().map(|(l, e)| inst(l, e)).collect())
    }

    #[test]
    fn entropy_pure_uniform_and_formula() {
        assert_eq!(entropy(&[7]).unwrap(), 0.0);
        assert_eq!(entropy(&[5, 5]).unwrap(), 1.0);
        let counts = [9u32, 5, 2];
        let n = 16.0;
        let expected: f64 = -[9.0f64, 5.0, 2.0]
            .iter()
            .map(|c| (c / n) * (c / n).log2())
            .sum::<f64>();
        assert!((entropy(&counts).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(entropy(&[]), Err(ClassifierError::EmptyCounts)));
        assert!(matches!(entropy(&[0, 0]), Err(ClassifierError::EmptyCounts)));
    }

    #[test]
    fn best_split_constant_feature_is_none() {
        let data = dataset(&[
            ("a", &[(0, 1.0)]),
            ("a", &[(0, 1.0)]),
            ("b", &[(0, 1.0)]),
            ("b", &[(0, 1.0)]),
        ]);
        let idx: Vec<u32> = (0..4).collect();
        assert!(best_split(&data, &idx, 0, false, 1).is_none());
    }

    #[test]
    fn best_split_perfect_binary() {
        let data = dataset(&[
            ("a", &[(0, 1.0)]),
            ("a", &[(0, 2.0)]),
            ("b", &[(0, 3.0)]),
            ("b", &[(0, 4.0)]),
        ]);
        let idx: Vec<u32> = (0..4).collect();
        let cand = best_split(&data, &idx, 0, false, 1).unwrap();
        assert_eq!(cand.test, SplitTest::Le(2.5));
        assert!((cand.gain - 1.0).abs() < 1e-12);
        assert!((cand.gain_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn best_split_matches_exhaustive_oracle() {
        // Oracle: enumerate every midpoint candidate with independently
        // written entropy arithmetic and pick by (gain_ratio, -threshold).
        fn oracle(values: &[f64], labels: &[u32], min_leaf: usize) -> Option<(f64, f64)> {
            fn h(subset: &[u32]) -> f64 {
                // BTreeMap keeps summation order deterministic.
                let mut m = std::collections::BTreeMap::new();
                for &l in subset {
                    *m.entry(l).or_insert(0usize) += 1;
                }
                let n = subset.len() as f64;
                m.values()
                    .map(|&c| {
                        let p = c as f64 / n;
                        -p * p.log2()
                    })
                    .sum()
            }
            let mut sorted: Vec<f64> = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let mut best: Option<(f64, f64)> = None;
            for w in sorted.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (v, lab) in values.iter().zip(labels) {
                    if *v <= t {
                        l.push(*lab);
                    } else {
                        r.push(*lab);
                    }
                }
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let n = labels.len() as f64;
                let gain = h(labels) - (l.len() as f64 / n) * h(&l) - (r.len() as f64 / n) * h(&r);
                if gain <= 1e-12 {
                    continue;
                }
                let wl = l.len() as f64 / n;
                let wr = r.len() as f64 / n;
                let si = -(wl * wl.log2() + wr * wr.log2());
                let gr = gain / si;
                if best.is_none_or(|(bg, bt)| gr > bg || (gr == bg && t < bt)) {
                    best = Some((gr, t));
                }
            }
            best
        }

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(4..30);
            let rows: Vec<(String, f64)> = (0..n)
                .map(|_| {
                    let label = ["a", "b", "c"][rng.gen_range(0..3)].to_string();
                    let value = rng.gen_range(0..12) as f64;
                    (label, value)
                })
                .collect();
            let data = Dataset::from_instances(
                rows.iter()
                    .map(|(l, v)| inst(l, &[(3, *v)]))
                    .collect(),
            );
            let idx: Vec<u32> = (0..n as u32).collect();
            let got = best_split(&data, &idx, 3, false, 2);
            let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let labels: Vec<u32> = (0..n).map(|i| data.label_index(i)).collect();
            let want = oracle(&values, &labels, 2);
            match (got, want) {
                (None, None) => {}
                (Some(c), Some((gr, t))) => {
                    assert!((c.gain_ratio - gr).abs() < 1e-9, "{} vs {gr}", c.gain_ratio);
                    assert_eq!(c.test, SplitTest::Le(t));
                }
                other => panic!("mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn categorical_split_is_equality() {
        let data = dataset(&[
            ("a", &[(22, 10.0)]),
            ("a", &[(22, 10.0)]),
            ("b", &[(22, 47.0)]),
            ("b", &[(22, 99.0)]),
        ]);
        let idx: Vec<u32> = (0..4).collect();
        let cand = best_split(&data, &idx, 22, true, 1).unwrap();
        assert_eq!(cand.test, SplitTest::Eq(10.0));
    }

    #[test]
    fn train_single_label_yields_single_leaf() {
        let data = dataset(&[("only", &[]), ("only", &[(0, 5.0)])]);
        let tree = train(&data, &TrainParams::default()).unwrap();
        assert_eq!(tree.node_count(), 1);
        let p = tree.predict(&FeatureVector([0.0; FEATURE_COUNT]));
        assert_eq!(p.label, "only");
        assert_eq!(p.confidence, 1.0);
    }

    #[test]
    fn train_separable_two_class_is_depth_one() {
        let rows: Vec<(&str, Vec<(usize, f64)>)> = (0..10)
            .map(|i| {
                if i < 5 {
                    ("low", vec![(0, i as f64)])
                } else {
                    ("high", vec![(0, 100.0 + i as f64)])
                }
            })
            .collect();
        let data = Dataset::from_instances(
            rows.iter().map(|(l, e)| inst(l, e)).collect(),
        );
        let tree = train(&data, &TrainParams { prune: false, ..Default::default() }).unwrap();
        assert_eq!(tree.node_count(), 3);
        for (i, inst) in data.instances().iter().enumerate() {
            assert_eq!(tree.predict(&inst.features).label, data.labels()[data.label_index(i) as usize]);
        }
    }

    #[test]
    fn boundary_value_goes_left() {
        let data = dataset(&[
            ("a", &[(0, 1.0)]),
            ("a", &[(0, 2.0)]),
            ("b", &[(0, 3.0)]),
            ("b", &[(0, 4.0)]),
        ]);
        let tree = train(&data, &TrainParams { prune: false, min_leaf: 1, ..Default::default() }).unwrap();
        let mut fv = [0f64; FEATURE_COUNT];
        fv[0] = 2.5;
        assert_eq!(tree.predict(&FeatureVector(fv)).label, "a");
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Dataset::from_instances(vec![]);
        assert!(matches!(
            train(&data, &TrainParams::default()),
            Err(ClassifierError::EmptyDataset)
        ));
    }

    #[test]
    fn pruned_tree_never_larger() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let data = Dataset::from_instances(
                (0..120)
                    .map(|_| {
                        let class = rng.gen_range(0..3);
                        let label = ["x", "y", "z"][class];
                        // Noisy clusters on two features.
                        let f0 = class as f64 * 10.0 + rng.gen_range(-6.0..6.0);
                        let f1 = rng.gen_range(0.0..5.0);
                        inst(label, &[(1, f0), (2, f1)])
                    })
                    .collect(),
            );
            let unpruned = train(
                &data,
                &TrainParams {
                    prune: false,
                    ..Default::default()
                },
            )
            .unwrap();
            let pruned = train(&data, &TrainParams::default()).unwrap();
            assert!(pruned.node_count() <= unpruned.node_count());
        }
    }

    #[test]
    fn permuting_instances_gives_predict_equivalent_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut instances: Vec<LabeledInstance> = (0..80)
            .map(|_| {
                let class = rng.gen_range(0..3);
                let label = ["x", "y", "z"][class];
                let f0 = class as f64 * 4.0 + rng.gen_range(0..4) as f64;
                let f5 = rng.gen_range(0..3) as f64;
                inst(label, &[(0, f0), (5, f5)])
            })
            .collect();
        let tree_a = train(
            &Dataset::from_instances(instances.clone()),
            &TrainParams::default(),
        )
        .unwrap();
        instances.shuffle(&mut rng);
        let tree_b = train(
            &Dataset::from_instances(instances),
            &TrainParams::default(),
        )
        .unwrap();
        for _ in 0..300 {
            let mut fv = [0f64; FEATURE_COUNT];
            fv[0] = rng.gen_range(-2.0..16.0);
            fv[5] = rng.gen_range(-1.0..4.0);
            let fv = FeatureVector(fv);
            assert_eq!(tree_a.predict(&fv).label, tree_b.predict(&fv).label);
        }
    }

    #[test]
    fn unseen_categorical_code_takes_not_equal_branch() {
        let data = dataset(&[
            ("a", &[(22, 10.0)]),
            ("a", &[(22, 10.0)]),
            ("b", &[(22, 47.0)]),
            ("b", &[(22, 47.0)]),
        ]);
        let tree = train(&data, &TrainParams { prune: false, min_leaf: 1, ..Default::default() }).unwrap();
        let mut fv = [0f64; FEATURE_COUNT];
        fv[22] = 1234.0; // never seen in training
        assert_eq!(tree.predict(&FeatureVector(fv)).label, "b");
    }

    #[test]
    fn inverse_normal_cdf_reference_points() {
        let cases = [
            (0.5, 0.0),
            (0.75, 0.674489750196082),
            (0.975, 1.959963984540054),
            (0.025, -1.959963984540054),
            (0.9986501019683699, 2.999999999999999),
            (0.001, -3.090232306167814),
        ];
        for (p, want) in cases {
            assert!(
                (inverse_normal_cdf(p) - want).abs() < 1e-8,
                "p={p}: {} vs {want}",
                inverse_normal_cdf(p)
            );
        }
    }
}
