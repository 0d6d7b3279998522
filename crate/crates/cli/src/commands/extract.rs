use std::path::PathBuf;

use clap::Parser;
use flowid_core::features::write_csv;
use flowid_core::pipeline::flow_store_from_pcap_file;

use crate::config::FileConfig;
use crate::util::{parse_label_policy, parse_port_filter, pipeline_config, write_atomic};
use crate::{EXIT_EMPTY, EXIT_OK};

#[derive(Parser)]
pub struct Args {
    /// Input pcap file.
    #[arg(long)]
    pcap: PathBuf,
    /// Application-data packet threshold (default 5).
    #[arg(long)]
    d: Option<usize>,
    /// Label source: `sni` or `manifest:PATH` (default sni).
    #[arg(long)]
    labels: Option<String>,
    /// Keep only segments with this port on either side, or `none`
    /// (default 443).
    #[arg(long)]
    port_filter: Option<String>,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let d = args.d.or(file.usize("extract", "d")).unwrap_or(5);
    let labels = args
        .labels
        .or(file.string("extract", "labels"))
        .unwrap_or_else(|| "sni".into());
    let port = args
        .port_filter
        .or(file.string("extract", "port-filter"))
        .unwrap_or_else(|| "443".into());

    let policy = parse_label_policy(&labels)?;
    let cfg = pipeline_config(d, parse_port_filter(&port)?);
    let (store, summary, unlabeled) = flow_store_from_pcap_file(&args.pcap, &cfg, &policy)?;
    if let Some(reason) = &summary.truncated {
        eprintln!("warning: capture ended early: {reason}");
    }

    let instances = store.instances_at(d);
    let mut buf = Vec::new();
    write_csv(&mut buf, &instances)?;
    write_atomic(&args.out, &buf)?;

    println!(
        "packets {}  flows ready {}  invalid {}  unlabeled {}  rows {}",
        summary.packets,
        summary.table.flows_ready,
        summary.table.flows_invalid,
        unlabeled,
        instances.len()
    );
    Ok(if instances.is_empty() { EXIT_EMPTY } else { EXIT_OK })
}
