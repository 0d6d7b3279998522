use std::path::PathBuf;

use clap::Parser;
use flowid_core::classifier::{train, Dataset, TrainParams};
use flowid_core::features::read_csv;

use crate::config::FileConfig;
use crate::util::write_atomic;
use crate::{EXIT_EMPTY, EXIT_OK};

#[derive(Parser)]
pub struct Args {
    /// Input feature CSV (the schema written by `extract`).
    #[arg(long)]
    features: PathBuf,
    /// Minimum instances per leaf (default 2).
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Pruning confidence (default 0.25).
    #[arg(long)]
    confidence: Option<f64>,
    /// Disable pessimistic pruning.
    #[arg(long)]
    no_prune: bool,
    /// Drop labels with fewer instances than this (default 14).
    #[arg(long)]
    min_instances: Option<usize>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let min_leaf = args.min_leaf.or(file.usize("train", "min-leaf")).unwrap_or(2);
    let confidence = args
        .confidence
        .or(file.f64("train", "confidence"))
        .unwrap_or(0.25);
    let prune = !(args.no_prune || file.bool("train", "no-prune").unwrap_or(false));
    let min_instances = args
        .min_instances
        .or(file.usize("train", "min-instances"))
        .unwrap_or(14);

    let reader = std::io::BufReader::new(std::fs::File::open(&args.features)?);
    let instances = read_csv(reader)?;
    let dataset = Dataset::from_instances(instances).filter_min_instances(min_instances);
    if dataset.is_empty() {
        eprintln!("no label has at least {min_instances} instances; nothing to train on");
        return Ok(EXIT_EMPTY);
    }

    let params = TrainParams {
        min_leaf,
        prune,
        confidence,
        ..Default::default()
    };
    let tree = train(&dataset, &params)?;

    let correct = dataset
        .instances()
        .iter()
        .filter(|inst| tree.predict(&inst.features).label == inst.label)
        .count();
    println!(
        "nodes {}  leaves {}  labels {}  instances {}  training accuracy {:.4}",
        tree.node_count(),
        tree.leaf_count(),
        tree.labels().len(),
        dataset.len(),
        correct as f64 / dataset.len() as f64
    );

    write_atomic(&args.out, tree.serialize().as_bytes())?;
    Ok(EXIT_OK)
}
