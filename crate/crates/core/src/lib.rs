//! Early identification of HTTPS services from the first packets of a flow.
//!
//! The pipeline reassembles TCP segments into per-4-tuple flows, types each
//! payload packet as TLS handshake or application data, extracts 36
//! statistical features over the handshake packets plus the first `d`
//! application data packets, and classifies the flow with a C4.5-style
//! decision tree — all without touching the encrypted payload.
//!
//! Modules follow the processing order:
//!
//! * [`capture`] — pcap ingestion and Ethernet/IPv4/TCP frame decoding
//! * [`tls`] — TLS record-layer scanning and ClientHello/ServerHello parsing
//! * [`reassembly`] — flow table, ordering, packet phase accounting
//! * [`features`] — the 36-feature vector and its statistics
//! * [`classifier`] — C4.5 induction, pruning, prediction, model files
//! * [`eval`] — cross-validation experiments and the synthetic trace generator
//! * [`pipeline`] — glue running a packet source end to end

pub mod capture;
pub mod classifier;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod reassembly;
pub mod tls;

pub use capture::{PacketSource, PcapReader, RawPacket, TcpSegmentView};
pub use classifier::{Dataset, DecisionTree, TrainParams};
pub use features::{FeatureVector, LabeledInstance, FEATURE_COUNT};
pub use reassembly::{FlowKey, FlowReadyEvent, FlowTable, ReadyFlow};
