use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;
use flowid_core::classifier::TrainParams;
use flowid_core::eval::{
    kfold_accuracy, run_d_sweep, run_generic_vs_dedicated, run_threshold_matrix, EvalError,
    ExperimentConfig, FlowStore,
};
use flowid_core::features::read_csv;
use flowid_core::pipeline::flow_store_from_pcap_file;

use crate::config::FileConfig;
use crate::util::{parse_d_list, parse_label_policy, parse_port_filter, pipeline_config, write_atomic};
use crate::{EXIT_EMPTY, EXIT_ERROR, EXIT_OK};

#[derive(Parser)]
pub struct Args {
    /// Input pcap file; repeat the flag for multiple partitions.
    #[arg(long)]
    pcap: Vec<PathBuf>,
    /// Input feature CSV (sweep mode only; thresholds cannot be re-applied
    /// to already-extracted features).
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Experiment: `sweep`, `matrix` or `generic`.
    #[arg(long)]
    mode: String,
    /// Training thresholds, comma separated (sweep uses this as its d list).
    #[arg(long)]
    train_d: Option<String>,
    /// Testing thresholds, comma separated (matrix mode).
    #[arg(long)]
    test_d: Option<String>,
    /// Cross-validation folds (default 10).
    #[arg(long)]
    folds: Option<usize>,
    /// Fold-shuffling seed (default 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Drop labels with fewer instances than this (default 14).
    #[arg(long)]
    min_instances: Option<usize>,
    /// Label source for pcap inputs: `sni` or `manifest:PATH`.
    #[arg(long)]
    labels: Option<String>,
    /// Port filter for pcap inputs (default 443, `none` disables).
    #[arg(long)]
    port_filter: Option<String>,
    /// Matrix cells from whole-set train/test instead of k-fold (the
    /// aligned diagonal is then omitted).
    #[arg(long)]
    whole_set: bool,
    /// Output directory for CSVs and the summary.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let folds = args.folds.or(file.usize("evaluate", "folds")).unwrap_or(10);
    let seed = args.seed.or(file.u64("evaluate", "seed")).unwrap_or(42);
    let min_instances = args
        .min_instances
        .or(file.usize("evaluate", "min-instances"))
        .unwrap_or(14);
    let labels = args
        .labels
        .or(file.string("evaluate", "labels"))
        .unwrap_or_else(|| "sni".into());
    let port = args
        .port_filter
        .or(file.string("evaluate", "port-filter"))
        .unwrap_or_else(|| "443".into());
    let train_d = match args.train_d.or(file.string("evaluate", "train-d")) {
        Some(list) => parse_d_list(&list)?,
        None => match args.mode.as_str() {
            "sweep" => (0..=9).collect(),
            _ => (1..=9).collect(),
        },
    };
    let test_d = match args.test_d.or(file.string("evaluate", "test-d")) {
        Some(list) => parse_d_list(&list)?,
        None => (1..=9).collect(),
    };

    let cfg = ExperimentConfig {
        folds,
        seed,
        min_instances_per_label: min_instances,
        train_d: train_d.clone(),
        test_d: test_d.clone(),
        whole_set_matrix: args.whole_set || file.bool("evaluate", "whole-set").unwrap_or(false),
        train_params: TrainParams::default(),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    // Load inputs. Feature CSVs carry a fixed threshold, so only the plain
    // k-fold path accepts them; sweeps and matrices re-extract per d and
    // need the flows themselves.
    if !args.features.is_empty() {
        if args.mode != "sweep" {
            bail!("--features supports only `--mode sweep` (k-fold at the extracted threshold); use --pcap for matrix/generic");
        }
        let mut instances = Vec::new();
        for path in &args.features {
            let reader = std::io::BufReader::new(std::fs::File::open(path)?);
            instances.extend(read_csv(reader)?);
        }
        let filtered: Vec<_> = {
            let mut counts = std::collections::HashMap::new();
            for inst in &instances {
                *counts.entry(inst.label.clone()).or_insert(0usize) += 1;
            }
            instances
                .into_iter()
                .filter(|i| counts[&i.label] >= min_instances)
                .collect()
        };
        let (mean, std) = match kfold_accuracy(&filtered, &cfg) {
            Ok(r) => r,
            Err(EvalError::Empty) => return Ok(EXIT_EMPTY),
            Err(e) => return map_eval_err(e),
        };
        let summary = format!("k-fold accuracy over fixed features: {mean:.4}±{std:.4}\n");
        write_atomic(&args.out.join("kfold.csv"), format!("mean,std\n{mean:.6},{std:.6}\n").as_bytes())?;
        write_atomic(&args.out.join("summary.txt"), summary.as_bytes())?;
        print!("{summary}");
        return Ok(EXIT_OK);
    }

    if args.pcap.is_empty() {
        bail!("evaluate needs --pcap (or --features for sweep mode)");
    }
    let ingest_d = train_d
        .iter()
        .chain(test_d.iter())
        .copied()
        .max()
        .unwrap_or(9)
        .max(1);
    let policy = parse_label_policy(&labels)?;
    let pipe_cfg = pipeline_config(ingest_d, parse_port_filter(&port)?);
    let mut stores = Vec::new();
    for path in &args.pcap {
        let (store, summary, unlabeled) = flow_store_from_pcap_file(path, &pipe_cfg, &policy)?;
        if let Some(reason) = &summary.truncated {
            eprintln!("warning: {}: capture ended early: {reason}", path.display());
        }
        eprintln!(
            "{}: {} labeled flows ({} unlabeled, {} invalid)",
            path.display(),
            store.len(),
            unlabeled,
            summary.table.flows_invalid
        );
        stores.push(store);
    }

    let mut summary = String::new();
    match args.mode.as_str() {
        "sweep" => {
            let combined = merge_stores(&stores);
            let points = match run_d_sweep(&combined, &train_d, &cfg) {
                Ok(r) => r,
                Err(EvalError::Empty) => return Ok(EXIT_EMPTY),
                Err(e) => return map_eval_err(e),
            };
            let mut csv = String::from("d,accuracy_mean,accuracy_std\n");
            for p in &points {
                let _ = writeln!(csv, "{},{:.6},{:.6}", p.d, p.accuracy_mean, p.accuracy_std);
                let _ = writeln!(
                    summary,
                    "d={}: accuracy {:.4}±{:.4}",
                    p.d, p.accuracy_mean, p.accuracy_std
                );
            }
            write_atomic(&args.out.join("sweep.csv"), csv.as_bytes())?;
        }
        "matrix" => {
            let combined = merge_stores(&stores);
            let matrix = match run_threshold_matrix(&combined, &cfg) {
                Ok(r) => r,
                Err(EvalError::Empty) => return Ok(EXIT_EMPTY),
                Err(e) => return map_eval_err(e),
            };
            write_atomic(&args.out.join("matrix.csv"), matrix.to_csv().as_bytes())?;
            let _ = writeln!(
                summary,
                "train/test threshold matrix over train_d={train_d:?} test_d={test_d:?}"
            );
            for &td in &matrix.train_d {
                let _ = write!(summary, "train {td}:");
                for &ed in &matrix.test_d {
                    match matrix.cell(td, ed) {
                        Some((m, _)) => {
                            let _ = write!(summary, " {m:.3}");
                        }
                        None => {
                            let _ = write!(summary, "   -  ");
                        }
                    }
                }
                let _ = writeln!(summary);
            }
        }
        "generic" => {
            if stores.len() < 2 {
                bail!("generic mode needs at least two --pcap partitions");
            }
            let d = train_d.first().copied().unwrap_or(5);
            let cmp = match run_generic_vs_dedicated(&stores, d, &cfg) {
                Ok(r) => r,
                Err(EvalError::Empty) => return Ok(EXIT_EMPTY),
                Err(e) => return map_eval_err(e),
            };
            write_atomic(&args.out.join("generic.csv"), cmp.to_csv().as_bytes())?;
            summary.push_str(&cmp.to_text());
        }
        other => bail!("unknown mode {other:?}; expected sweep, matrix or generic"),
    }

    write_atomic(&args.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn merge_stores(stores: &[FlowStore]) -> FlowStore {
    if stores.len() == 1 {
        return stores[0].clone();
    }
    let name = stores
        .iter()
        .map(|s| s.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    FlowStore::new(
        name,
        stores.iter().flat_map(|s| s.flows.iter().cloned()).collect(),
    )
}

fn map_eval_err(err: EvalError) -> anyhow::Result<i32> {
    eprintln!("flowid: {err}");
    Ok(EXIT_ERROR)
}
