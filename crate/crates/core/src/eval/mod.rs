//! Evaluation methodology: stratified cross-validation, accuracy, threshold
//! sweeps and matrices, and the generic-vs-dedicated model comparison.
//!
//! Experiments operate on a [`FlowStore`] — labeled ready flows — rather
//! than on a fixed feature table, because features depend on the packet
//! threshold `d`: every cell of a train/test matrix re-extracts features at
//! its own threshold from the same flows. All results are deterministic
//! given the store, the seed and the config.

pub mod synth;

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{train, ClassifierError, Dataset, DecisionTree, TrainParams};
use crate::features::{self, InstanceMeta, LabeledInstance};
use crate::reassembly::ReadyFlow;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("label {label:?} has {have} instances, need at least {need}")]
    TooFewInstances {
        label: String,
        have: usize,
        need: usize,
    },
    #[error("partitions share no labels")]
    DisjointLabels,
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Fraction of positions where prediction equals truth.
pub fn accuracy<T: PartialEq>(predictions: &[T], truth: &[T]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truth.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let matches = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(matches as f64 / truth.len() as f64)
}

/// Stratified k-fold split: per label, instances are shuffled (seeded) and
/// dealt so fold sizes differ by at most one; folds partition all indices.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let labels: Vec<&str> = data
        .instances()
        .iter()
        .map(|i| i.label.as_str())
        .collect();
    stratified_folds_by_label(&labels, k, seed)
}

fn stratified_folds_by_label(
    labels: &[&str],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig("folds must be at least 2".into()));
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let vocab: BTreeSet<&str> = labels.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for (li, label) in vocab.iter().enumerate() {
        let mut group: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == *label).collect();
        if group.len() < k {
            return Err(EvalError::TooFewInstances {
                label: label.to_string(),
                have: group.len(),
                need: k,
            });
        }
        group.shuffle(&mut rng);
        // Offsetting the starting fold per label keeps total sizes even.
        for (i, idx) in group.into_iter().enumerate() {
            folds[(li + i) % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Labeled ready flows, the input to every experiment.
#[derive(Debug, Clone)]
pub struct FlowStore {
    /// Partition name: trace id or client archetype.
    pub name: String,
    pub flows: Vec<(ReadyFlow, String)>,
}

impl FlowStore {
    pub fn new(name: impl Into<String>, flows: Vec<(ReadyFlow, String)>) -> Self {
        FlowStore {
            name: name.into(),
            flows,
        }
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Drops flows whose label occurs fewer than `min` times.
    pub fn filter_min_instances(&self, min: usize) -> FlowStore {
        let mut counts = std::collections::HashMap::new();
        for (_, label) in &self.flows {
            *counts.entry(label.as_str()).or_insert(0usize) += 1;
        }
        FlowStore {
            name: self.name.clone(),
            flows: self
                .flows
                .iter()
                .filter(|(_, l)| counts[l.as_str()] >= min)
                .cloned()
                .collect(),
        }
    }

    /// Keeps only flows with a label in `keep`.
    fn restrict_labels(&self, keep: &BTreeSet<String>) -> FlowStore {
        FlowStore {
            name: self.name.clone(),
            flows: self
                .flows
                .iter()
                .filter(|(_, l)| keep.contains(l))
                .cloned()
                .collect(),
        }
    }

    fn label_set(&self) -> BTreeSet<String> {
        self.flows.iter().map(|(_, l)| l.clone()).collect()
    }

    /// Extracts features at threshold `d` for every flow, in store order.
    pub fn instances_at(&self, d: usize) -> Vec<LabeledInstance> {
        self.flows
            .iter()
            .map(|(flow, label)| LabeledInstance {
                features: features::extract(flow, d),
                label: label.clone(),
                meta: InstanceMeta {
                    flow: flow.key_string(),
                    trace: self.name.clone(),
                    appdata_available: flow.appdata_pkts.len(),
                },
            })
            .collect()
    }

    fn labels(&self) -> Vec<&str> {
        self.flows.iter().map(|(_, l)| l.as_str()).collect()
    }
}

/// Experiment parameters mirroring the evaluation protocol.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub seed: u64,
    pub min_instances_per_label: usize,
    pub train_d: Vec<usize>,
    pub test_d: Vec<usize>,
    /// Matrix cells from whole-set train/test instead of k-fold; the
    /// aligned diagonal is then omitted (it is trivially perfect).
    pub whole_set_matrix: bool,
    pub train_params: TrainParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 10,
            seed: 42,
            min_instances_per_label: 14,
            train_d: (1..=9).collect(),
            test_d: (1..=9).collect(),
            whole_set_matrix: false,
            train_params: TrainParams::default(),
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn train_subset(
    instances: &[LabeledInstance],
    include: impl Fn(usize) -> bool,
    params: &TrainParams,
) -> Result<DecisionTree, EvalError> {
    let subset: Vec<LabeledInstance> = instances
        .iter()
        .enumerate()
        .filter(|(i, _)| include(*i))
        .map(|(_, inst)| inst.clone())
        .collect();
    Ok(train(&Dataset::from_instances(subset), params)?)
}

fn fold_membership(folds: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut of = vec![0usize; n];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            of[i] = f;
        }
    }
    of
}

/// Plain stratified k-fold accuracy over a fixed feature table.
pub fn kfold_accuracy(
    instances: &[LabeledInstance],
    cfg: &ExperimentConfig,
) -> Result<(f64, f64), EvalError> {
    if instances.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels: Vec<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    let folds = stratified_folds_by_label(&labels, cfg.folds, cfg.seed)?;
    let membership = fold_membership(&folds, instances.len());
    let mut accs = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let tree = train_subset(instances, |i| membership[i] != f, &cfg.train_params)?;
        let preds: Vec<&str> = fold
            .iter()
            .map(|&i| tree.predict(&instances[i].features).label)
            .collect();
        let truth: Vec<&str> = fold.iter().map(|&i| instances[i].label.as_str()).collect();
        accs.push(accuracy(&preds, &truth)?);
    }
    Ok(mean_std(&accs))
}

/// One aligned train/test accuracy per threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub d: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

/// k-fold accuracy for each threshold in `d_values`, with features
/// extracted at that threshold for both training and testing.
pub fn run_d_sweep(
    store: &FlowStore,
    d_values: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<SweepPoint>, EvalError> {
    let filtered = store.filter_min_instances(cfg.min_instances_per_label);
    if filtered.is_empty() {
        return Err(EvalError::Empty);
    }
    let folds = stratified_folds_by_label(&filtered.labels(), cfg.folds, cfg.seed)?;
    let membership = fold_membership(&folds, filtered.len());

    let mut out = Vec::with_capacity(d_values.len());
    for &d in d_values {
        let instances = filtered.instances_at(d);
        let mut accs = Vec::with_capacity(folds.len());
        for (f, fold) in folds.iter().enumerate() {
            let tree = train_subset(&instances, |i| membership[i] != f, &cfg.train_params)?;
            let preds: Vec<&str> = fold
                .iter()
                .map(|&i| tree.predict(&instances[i].features).label)
                .collect();
            let truth: Vec<&str> = fold.iter().map(|&i| instances[i].label.as_str()).collect();
            accs.push(accuracy(&preds, &truth)?);
        }
        let (mean, std) = mean_std(&accs);
        out.push(SweepPoint {
            d,
            accuracy_mean: mean,
            accuracy_std: std,
        });
    }
    Ok(out)
}

/// Accuracy matrix over decoupled train/test thresholds.
#[derive(Debug, Clone)]
pub struct ResultMatrix {
    pub train_d: Vec<usize>,
    pub test_d: Vec<usize>,
    /// `cells[i][j]` = (mean, std) for train threshold `train_d[i]`, test
    /// threshold `test_d[j]`; `None` where the configuration is skipped.
    pub cells: Vec<Vec<Option<(f64, f64)>>>,
}

impl ResultMatrix {
    pub fn cell(&self, train_d: usize, test_d: usize) -> Option<(f64, f64)> {
        let i = self.train_d.iter().position(|&d| d == train_d)?;
        let j = self.test_d.iter().position(|&d| d == test_d)?;
        self.cells[i][j]
    }

    /// CSV rendering: rows are training thresholds, columns testing ones.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_d");
        for d in &self.test_d {
            out.push_str(&format!(",test_{d}_mean,test_{d}_std"));
        }
        out.push('\n');
        for (i, td) in self.train_d.iter().enumerate() {
            out.push_str(&td.to_string());
            for cell in &self.cells[i] {
                match cell {
                    Some((m, s)) => out.push_str(&format!(",{m:.6},{s:.6}")),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Fills the train/test threshold matrix. In k-fold mode every cell (the
/// diagonal included) trains on the fold's training split with features at
/// `train_d` and tests the held-out split at `test_d`. In whole-set mode
/// each cell trains and tests on the full store and the aligned diagonal is
/// skipped.
pub fn run_threshold_matrix(
    store: &FlowStore,
    cfg: &ExperimentConfig,
) -> Result<ResultMatrix, EvalError> {
    if cfg.train_d.is_empty() || cfg.test_d.is_empty() {
        return Err(EvalError::InvalidConfig("empty threshold lists".into()));
    }
    let filtered = store.filter_min_instances(cfg.min_instances_per_label);
    if filtered.is_empty() {
        return Err(EvalError::Empty);
    }

    let mut cells = vec![vec![None; cfg.test_d.len()]; cfg.train_d.len()];
    if cfg.whole_set_matrix {
        for (i, &td) in cfg.train_d.iter().enumerate() {
            let train_instances = filtered.instances_at(td);
            let tree = train_subset(&train_instances, |_| true, &cfg.train_params)?;
            for (j, &ed) in cfg.test_d.iter().enumerate() {
                if td == ed {
                    continue;
                }
                let test_instances = filtered.instances_at(ed);
                let preds: Vec<&str> = test_instances
                    .iter()
                    .map(|inst| tree.predict(&inst.features).label)
                    .collect();
                let truth: Vec<&str> =
                    test_instances.iter().map(|i| i.label.as_str()).collect();
                cells[i][j] = Some((accuracy(&preds, &truth)?, 0.0));
            }
        }
    } else {
        let folds = stratified_folds_by_label(&filtered.labels(), cfg.folds, cfg.seed)?;
        let membership = fold_membership(&folds, filtered.len());
        for (i, &td) in cfg.train_d.iter().enumerate() {
            let train_instances = filtered.instances_at(td);
            let trees: Vec<DecisionTree> = (0..folds.len())
                .map(|f| train_subset(&train_instances, |idx| membership[idx] != f, &cfg.train_params))
                .collect::<Result<_, _>>()?;
            for (j, &ed) in cfg.test_d.iter().enumerate() {
                let test_instances = filtered.instances_at(ed);
                let mut accs = Vec::with_capacity(folds.len());
                for (f, fold) in folds.iter().enumerate() {
                    let preds: Vec<&str> = fold
                        .iter()
                        .map(|&idx| trees[f].predict(&test_instances[idx].features).label)
                        .collect();
                    let truth: Vec<&str> =
                        fold.iter().map(|&idx| test_instances[idx].label.as_str()).collect();
                    accs.push(accuracy(&preds, &truth)?);
                }
                let (mean, std) = mean_std(&accs);
                cells[i][j] = Some((mean, std));
            }
        }
    }
    Ok(ResultMatrix {
        train_d: cfg.train_d.clone(),
        test_d: cfg.test_d.clone(),
        cells,
    })
}

/// Dedicated-vs-generic comparison across client partitions.
#[derive(Debug, Clone)]
pub struct GenericComparison {
    pub partitions: Vec<String>,
    /// `dedicated[i][j]`: model trained on partition i, tested on partition
    /// j. Diagonal cells are k-fold within the partition; off-diagonal
    /// cells train on all of i and test on all of j.
    pub dedicated: Vec<Vec<(f64, f64)>>,
    /// Pooled model tested on each partition (k-fold over the pooled set,
    /// accuracy collected per partition on held-out folds).
    pub pooled: Vec<(f64, f64)>,
}

impl GenericComparison {
    pub fn to_text(&self) -> String {
        let mut out = String::from("model accuracy per test partition\n");
        for (i, name) in self.partitions.iter().enumerate() {
            out.push_str(&format!("dedicated[{name}]"));
            for (j, target) in self.partitions.iter().enumerate() {
                let (m, s) = self.dedicated[i][j];
                out.push_str(&format!("  {target}={:.4}±{:.4}", m, s));
            }
            out.push('\n');
        }
        out.push_str("pooled");
        for (j, target) in self.partitions.iter().enumerate() {
            let (m, s) = self.pooled[j];
            out.push_str(&format!("  {target}={:.4}±{:.4}", m, s));
        }
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for p in &self.partitions {
            out.push_str(&format!(",{p}_mean,{p}_std"));
        }
        out.push('\n');
        for (i, name) in self.partitions.iter().enumerate() {
            out.push_str(&format!("dedicated_{name}"));
            for &(m, s) in &self.dedicated[i] {
                out.push_str(&format!(",{m:.6},{s:.6}"));
            }
            out.push('\n');
        }
        out.push_str("pooled");
        for &(m, s) in &self.pooled {
            out.push_str(&format!(",{m:.6},{s:.6}"));
        }
        out.push('\n');
        out
    }
}

/// Trains one model per partition and one pooled model at threshold `d`,
/// then evaluates every model against every partition.
pub fn run_generic_vs_dedicated(
    partitions: &[FlowStore],
    d: usize,
    cfg: &ExperimentConfig,
) -> Result<GenericComparison, EvalError> {
    if partitions.len() < 2 {
        return Err(EvalError::InvalidConfig(
            "generic comparison needs at least two partitions".into(),
        ));
    }
    let filtered: Vec<FlowStore> = partitions
        .iter()
        .map(|p| p.filter_min_instances(cfg.min_instances_per_label))
        .collect();
    let mut shared = filtered[0].label_set();
    for p in &filtered[1..] {
        shared = shared.intersection(&p.label_set()).cloned().collect();
    }
    if shared.is_empty() {
        return Err(EvalError::DisjointLabels);
    }
    let parts: Vec<FlowStore> = filtered.iter().map(|p| p.restrict_labels(&shared)).collect();
    for p in &parts {
        if p.is_empty() {
            return Err(EvalError::Empty);
        }
    }

    let names: Vec<String> = parts.iter().map(|p| p.name.clone()).collect();
    let instances: Vec<Vec<LabeledInstance>> = parts.iter().map(|p| p.instances_at(d)).collect();

    // Dedicated models.
    let mut dedicated = vec![vec![(0.0, 0.0); parts.len()]; parts.len()];
    for (i, part) in parts.iter().enumerate() {
        let folds = stratified_folds_by_label(&part.labels(), cfg.folds, cfg.seed)?;
        let membership = fold_membership(&folds, part.len());
        let mut accs = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            let tree = train_subset(&instances[i], |idx| membership[idx] != f, &cfg.train_params)?;
            let preds: Vec<&str> = fold
                .iter()
                .map(|&idx| tree.predict(&instances[i][idx].features).label)
                .collect();
            let truth: Vec<&str> = fold
                .iter()
                .map(|&idx| instances[i][idx].label.as_str())
                .collect();
            accs.push(accuracy(&preds, &truth)?);
        }
        dedicated[i][i] = mean_std(&accs);

        let full_tree = train_subset(&instances[i], |_| true, &cfg.train_params)?;
        for (j, other) in instances.iter().enumerate() {
            if i == j {
                continue;
            }
            let preds: Vec<&str> = other
                .iter()
                .map(|inst| full_tree.predict(&inst.features).label)
                .collect();
            let truth: Vec<&str> = other.iter().map(|inst| inst.label.as_str()).collect();
            dedicated[i][j] = (accuracy(&preds, &truth)?, 0.0);
        }
    }

    // Pooled model: k-fold over the pooled set, accuracy broken out per
    // partition on the held-out instances.
    let pooled_instances: Vec<&LabeledInstance> = instances.iter().flatten().collect();
    let partition_of: Vec<usize> = instances
        .iter()
        .enumerate()
        .flat_map(|(p, v)| std::iter::repeat_n(p, v.len()))
        .collect();
    let pooled_labels: Vec<&str> = pooled_instances.iter().map(|i| i.label.as_str()).collect();
    let folds = stratified_folds_by_label(&pooled_labels, cfg.folds, cfg.seed)?;
    let membership = fold_membership(&folds, pooled_instances.len());
    let mut per_partition_accs: Vec<Vec<f64>> = vec![Vec::new(); parts.len()];
    for (f, fold) in folds.iter().enumerate() {
        let training: Vec<LabeledInstance> = pooled_instances
            .iter()
            .enumerate()
            .filter(|(idx, _)| membership[*idx] != f)
            .map(|(_, inst)| (*inst).clone())
            .collect();
        let tree = train(&Dataset::from_instances(training), &cfg.train_params)?;
        for (p, accs) in per_partition_accs.iter_mut().enumerate() {
            let subset: Vec<usize> = fold
                .iter()
                .copied()
                .filter(|&idx| partition_of[idx] == p)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let preds: Vec<&str> = subset
                .iter()
                .map(|&idx| tree.predict(&pooled_instances[idx].features).label)
                .collect();
            let truth: Vec<&str> = subset
                .iter()
                .map(|&idx| pooled_instances[idx].label.as_str())
                .collect();
            accs.push(accuracy(&preds, &truth)?);
        }
    }
    let pooled = per_partition_accs.iter().map(|a| mean_std(a)).collect();

    Ok(GenericComparison {
        partitions: names,
        dedicated,
        pooled,
    })
}
