//! End-to-end wiring: packet source → frame decoding → port filter → flow
//! table → ready flows, plus ground-truth labeling.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::capture::{decode_frame, CaptureError, PacketSource, PcapReader};
use crate::eval::FlowStore;
use crate::reassembly::{FlowReadyEvent, FlowTable, FlowTableStats, ReadyFlow, ReadyReason};

/// How often (in segments) idle/capacity eviction runs during ingestion.
const EVICT_INTERVAL: u64 = 4096;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Application-data packets that make a flow ready.
    pub d_threshold: usize,
    /// Keep only segments with this port on either side; `None` keeps all.
    pub port_filter: Option<u16>,
    pub capacity: usize,
    pub idle_timeout_micros: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d_threshold: 5,
            port_filter: Some(443),
            capacity: crate::reassembly::DEFAULT_CAPACITY,
            idle_timeout_micros: crate::reassembly::DEFAULT_IDLE_TIMEOUT_MICROS,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub packets: u64,
    /// Frames that were not complete IPv4+TCP.
    pub skipped_frames: u64,
    /// TCP segments dropped by the port filter.
    pub filtered_segments: u64,
    /// Set when the capture ended with an error (stream truncated).
    pub truncated: Option<String>,
    /// Largest number of simultaneously tracked flows.
    pub peak_flows: usize,
    pub table: FlowTableStats,
}

/// Runs a packet source to exhaustion, invoking `on_ready` for every
/// flow-ready event (threshold, termination, eviction, end of trace).
pub fn run_pipeline<S: PacketSource>(
    source: &mut S,
    cfg: &PipelineConfig,
    mut on_ready: impl FnMut(FlowReadyEvent),
) -> PipelineSummary {
    let mut summary = PipelineSummary::default();
    let mut table = FlowTable::new(cfg.capacity, cfg.idle_timeout_micros);
    let link_type = source.link_type();
    let mut last_ts = 0u64;

    loop {
        let pkt = match source.next_packet() {
            Ok(Some(pkt)) => pkt,
            Ok(None) => break,
            Err(e) => {
                summary.truncated = Some(e.to_string());
                break;
            }
        };
        summary.packets += 1;
        last_ts = pkt.ts_micros;
        let Some(seg) = decode_frame(&pkt, link_type) else {
            summary.skipped_frames += 1;
            continue;
        };
        if let Some(port) = cfg.port_filter {
            if seg.src_port != port && seg.dst_port != port {
                summary.filtered_segments += 1;
                continue;
            }
        }
        if let Some(event) = table.ingest(&seg, cfg.d_threshold) {
            on_ready(event);
        }
        summary.peak_flows = summary.peak_flows.max(table.len());
        if summary.packets % EVICT_INTERVAL == 0 {
            for (key, state) in table.evict(pkt.ts_micros) {
                on_ready(FlowReadyEvent {
                    key,
                    flow: state.snapshot(ReadyReason::Evicted),
                });
            }
        }
    }

    for (key, state) in table.evict(last_ts) {
        on_ready(FlowReadyEvent {
            key,
            flow: state.snapshot(ReadyReason::Evicted),
        });
    }
    for event in table.finish() {
        on_ready(event);
    }
    summary.table = table.stats().clone();
    summary
}

/// Collects every ready flow of a source.
pub fn collect_ready_flows<S: PacketSource>(
    source: &mut S,
    cfg: &PipelineConfig,
) -> (Vec<ReadyFlow>, PipelineSummary) {
    let mut flows = Vec::new();
    let summary = run_pipeline(source, cfg, |event| flows.push(event.flow));
    (flows, summary)
}

/// Ground-truth labeling policy for building datasets.
pub enum LabelPolicy {
    /// Label each flow with its extracted SNI; flows without one are dropped.
    Sni,
    /// Label by 4-tuple lookup; flows absent from the manifest are dropped.
    Manifest(HashMap<String, String>),
}

/// Parses a label manifest: one `client:port-server:port label` line per
/// flow. Both orientations of the 4-tuple are registered.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<HashMap<String, String>, PipelineError> {
    let mut map = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, label) = line.split_once(' ').ok_or(PipelineError::Manifest {
            line: i + 1,
            msg: "expected `<src>:<port>-<dst>:<port> <label>`".into(),
        })?;
        let (a, b) = key.split_once('-').ok_or(PipelineError::Manifest {
            line: i + 1,
            msg: "key must contain two endpoints separated by `-`".into(),
        })?;
        if label.is_empty() {
            return Err(PipelineError::Manifest {
                line: i + 1,
                msg: "empty label".into(),
            });
        }
        map.insert(key.to_string(), label.to_string());
        map.insert(format!("{b}-{a}"), label.to_string());
    }
    Ok(map)
}

/// Applies a labeling policy; returns labeled flows plus how many were
/// dropped for lack of a label.
pub fn label_flows(
    flows: Vec<ReadyFlow>,
    policy: &LabelPolicy,
) -> (Vec<(ReadyFlow, String)>, usize) {
    let mut labeled = Vec::with_capacity(flows.len());
    let mut unlabeled = 0usize;
    for flow in flows {
        let label = match policy {
            LabelPolicy::Sni => flow.sni().map(str::to_owned),
            LabelPolicy::Manifest(map) => map.get(&flow.key_string()).cloned(),
        };
        match label {
            Some(label) => labeled.push((flow, label)),
            None => unlabeled += 1,
        }
    }
    (labeled, unlabeled)
}

/// Full ingestion of an in-memory pcap into a labeled flow store.
pub fn flow_store_from_pcap_bytes(
    bytes: &[u8],
    cfg: &PipelineConfig,
    policy: &LabelPolicy,
    name: &str,
) -> Result<(FlowStore, PipelineSummary, usize), PipelineError> {
    let mut reader = PcapReader::new(bytes)?;
    let (flows, summary) = collect_ready_flows(&mut reader, cfg);
    let (labeled, unlabeled) = label_flows(flows, policy);
    Ok((FlowStore::new(name, labeled), summary, unlabeled))
}

/// Full ingestion of a pcap file into a labeled flow store.
pub fn flow_store_from_pcap_file(
    path: &Path,
    cfg: &PipelineConfig,
    policy: &LabelPolicy,
) -> Result<(FlowStore, PipelineSummary, usize), PipelineError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let mut reader = crate::capture::open_pcap(path)?;
    let (flows, summary) = collect_ready_flows(&mut reader, cfg);
    let (labeled, unlabeled) = label_flows(flows, policy);
    Ok((FlowStore::new(&name, labeled), summary, unlabeled))
}
