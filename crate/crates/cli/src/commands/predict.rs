use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use flowid_core::classifier::DecisionTree;
use flowid_core::features::{extract, read_csv};
use flowid_core::pipeline::collect_ready_flows;

use crate::config::FileConfig;
use crate::util::{parse_port_filter, pipeline_config, write_atomic};
use crate::{EXIT_EMPTY, EXIT_OK};

#[derive(Parser)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["pcap", "features"]))]
pub struct Args {
    /// Input pcap file.
    #[arg(long)]
    pcap: Option<PathBuf>,
    /// Input feature CSV (already extracted).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Application-data packet threshold (default 5).
    #[arg(long)]
    d: Option<usize>,
    /// Keep only segments with this port on either side, or `none`
    /// (default 443).
    #[arg(long)]
    port_filter: Option<String>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let d = args.d.or(file.usize("predict", "d")).unwrap_or(5);
    let port = args
        .port_filter
        .or(file.string("predict", "port-filter"))
        .unwrap_or_else(|| "443".into());

    let model_text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let tree = DecisionTree::deserialize(&model_text)?;

    let mut out = String::from("flow,label,confidence,appdata_used,processing_micros\n");
    let mut rows = 0usize;

    if let Some(pcap) = &args.pcap {
        let cfg = pipeline_config(d, parse_port_filter(&port)?);
        let mut reader = flowid_core::capture::open_pcap(pcap)?;
        let (flows, summary) = collect_ready_flows(&mut reader, &cfg);
        if let Some(reason) = &summary.truncated {
            eprintln!("warning: capture ended early: {reason}");
        }
        for flow in &flows {
            let started = Instant::now();
            let fv = extract(flow, d);
            let pred = tree.predict(&fv);
            let micros = started.elapsed().as_micros();
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                flow.key_string(),
                pred.label,
                pred.confidence,
                flow.appdata_pkts.len().min(d),
                micros
            );
            rows += 1;
        }
    } else if let Some(features) = &args.features {
        let reader = std::io::BufReader::new(std::fs::File::open(features)?);
        for inst in read_csv(reader)? {
            let started = Instant::now();
            let pred = tree.predict(&inst.features);
            let micros = started.elapsed().as_micros();
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                inst.meta.flow, pred.label, pred.confidence, inst.meta.appdata_available, micros
            );
            rows += 1;
        }
    }

    match &args.out {
        Some(path) => write_atomic(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(if rows == 0 { EXIT_EMPTY } else { EXIT_OK })
}
