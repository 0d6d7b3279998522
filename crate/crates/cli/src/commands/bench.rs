use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use flowid_core::capture::PcapReader;
use flowid_core::classifier::DecisionTree;
use flowid_core::features::extract;
use flowid_core::pipeline::run_pipeline;

use crate::config::FileConfig;
use crate::util::{parse_port_filter, pipeline_config};
use crate::EXIT_OK;

#[derive(Parser)]
pub struct Args {
    /// Input pcap file (read into memory before timing).
    #[arg(long)]
    pcap: PathBuf,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Application-data packet threshold (default 5).
    #[arg(long)]
    d: Option<usize>,
    /// Port filter (default 443, `none` disables).
    #[arg(long)]
    port_filter: Option<String>,
    /// Number of measurement passes (default 1).
    #[arg(long)]
    repeat: Option<usize>,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let d = args.d.or(file.usize("bench", "d")).unwrap_or(5);
    let repeat = args.repeat.or(file.usize("bench", "repeat")).unwrap_or(1).max(1);
    let port = args
        .port_filter
        .or(file.string("bench", "port-filter"))
        .unwrap_or_else(|| "443".into());

    let bytes = std::fs::read(&args.pcap)
        .with_context(|| format!("reading {}", args.pcap.display()))?;
    let model_text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let tree = DecisionTree::deserialize(&model_text)?;
    let cfg = pipeline_config(d, parse_port_filter(&port)?);

    for pass in 0..repeat {
        let mut reader = PcapReader::new(&bytes[..])?;
        let mut latencies_micros: Vec<f64> = Vec::new();
        let mut label_bytes = 0usize;
        let started = Instant::now();
        let summary = run_pipeline(&mut reader, &cfg, |event| {
            // Identification latency: flow-ready trigger to prediction.
            let t0 = Instant::now();
            let fv = extract(&event.flow, d);
            let pred = tree.predict(black_box(&fv));
            label_bytes += pred.label.len();
            latencies_micros.push(t0.elapsed().as_nanos() as f64 / 1000.0);
        });
        let elapsed = started.elapsed();

        let flows = latencies_micros.len();
        let (mean, std) = mean_std(&latencies_micros);
        let throughput = flows as f64 / elapsed.as_secs_f64();
        println!(
            "pass {pass}: flows {flows}  packets {}  latency {:.4}±{:.4} ms  \
             throughput {:.0} flows/sec  peak table {} flows  label bytes {}",
            summary.packets,
            mean / 1000.0,
            std / 1000.0,
            throughput,
            summary.peak_flows,
            label_bytes
        );
    }
    Ok(EXIT_OK)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
