use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use flowid_core::capture::{decode_frame, PacketSource, PcapReader};
use flowid_core::eval::synth::{default_service_specs, synth_generate, write_pcap};

use crate::config::FileConfig;
use crate::util::write_atomic;
use crate::EXIT_OK;

#[derive(Parser)]
pub struct Args {
    /// Number of services (default 5).
    #[arg(long)]
    services: Option<usize>,
    /// Flows per (service, archetype) pair (default 20).
    #[arg(long)]
    flows_per_service: Option<usize>,
    /// Number of client archetypes (default 1).
    #[arg(long)]
    archetypes: Option<usize>,
    /// Distribution overlap from 0 (disjoint) to 1 (heavily overlapping);
    /// default 0.
    #[arg(long)]
    difficulty: Option<f64>,
    /// Generator seed (default 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Output pcap.
    #[arg(long)]
    out: PathBuf,
    /// Output label manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Also write one pcap + manifest per archetype into this directory.
    #[arg(long)]
    split_dir: Option<PathBuf>,
}

pub fn run(args: Args, file: &FileConfig) -> anyhow::Result<i32> {
    let services = args
        .services
        .or(file.usize("synth", "services"))
        .unwrap_or(5);
    let flows = args
        .flows_per_service
        .or(file.usize("synth", "flows-per-service"))
        .unwrap_or(20);
    let archetypes = args
        .archetypes
        .or(file.usize("synth", "archetypes"))
        .unwrap_or(1);
    let difficulty = args
        .difficulty
        .or(file.f64("synth", "difficulty"))
        .unwrap_or(0.0);
    let seed = args.seed.or(file.u64("synth", "seed")).unwrap_or(42);

    let specs = default_service_specs(services, archetypes, difficulty);
    let trace = synth_generate(&specs, flows, seed)?;
    write_atomic(&args.out, &trace.pcap)?;
    write_atomic(&args.manifest, trace.manifest().as_bytes())?;
    println!(
        "services {services}  archetypes {archetypes}  flows {}  pcap bytes {}",
        trace.flows.len(),
        trace.pcap.len()
    );

    if let Some(dir) = &args.split_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        // Map both orientations of every flow key to its archetype, then
        // deal the combined trace's frames out per archetype.
        let mut arch_of: HashMap<String, String> = HashMap::new();
        for f in &trace.flows {
            arch_of.insert(format!("{}-{}", f.client, f.server), f.archetype.clone());
            arch_of.insert(format!("{}-{}", f.server, f.client), f.archetype.clone());
        }
        let mut frames: HashMap<String, Vec<(u64, Vec<u8>)>> = HashMap::new();
        let mut reader = PcapReader::new(&trace.pcap[..])?;
        let link = reader.link_type();
        while let Some(pkt) = reader.next_packet()? {
            let Some(seg) = decode_frame(&pkt, link) else { continue };
            let key = format!("{}:{}-{}:{}", seg.src_ip, seg.src_port, seg.dst_ip, seg.dst_port);
            if let Some(arch) = arch_of.get(&key) {
                frames
                    .entry(arch.clone())
                    .or_default()
                    .push((pkt.ts_micros, pkt.data));
            }
        }
        let mut names: Vec<&String> = frames.keys().collect();
        names.sort();
        for name in names {
            let pcap = write_pcap(&frames[name.as_str()]);
            write_atomic(&dir.join(format!("{name}.pcap")), &pcap)?;
            let manifest: String = trace
                .flows
                .iter()
                .filter(|f| &f.archetype == name)
                .map(|f| format!("{}-{} {}\n", f.client, f.server, f.service))
                .collect();
            write_atomic(&dir.join(format!("{name}.manifest")), manifest.as_bytes())?;
            println!("wrote partition {name}: {} packets", frames[name.as_str()].len());
        }
    }
    Ok(EXIT_OK)
}
