//! Shared fixtures for the criterion benches: a generated trace, its ready
//! flows, and a trained model.

use flowid_core::classifier::{train, Dataset, DecisionTree, TrainParams};
use flowid_core::eval::synth::{default_service_specs, synth_generate};
use flowid_core::pipeline::{flow_store_from_pcap_bytes, LabelPolicy, PipelineConfig};
use flowid_core::reassembly::ReadyFlow;

pub struct Fixture {
    pub pcap: Vec<u8>,
    pub flows: Vec<ReadyFlow>,
    pub tree: DecisionTree,
    pub config: PipelineConfig,
}

/// `services × archetypes × flows_per_pair` flows at difficulty 0, with a
/// model trained on the whole set at d=5.
pub fn fixture(services: usize, archetypes: usize, flows_per_pair: usize) -> Fixture {
    let specs = default_service_specs(services, archetypes, 0.0);
    let trace = synth_generate(&specs, flows_per_pair, 42).expect("valid specs");
    let config = PipelineConfig {
        d_threshold: 5,
        ..Default::default()
    };
    let (store, _, _) =
        flow_store_from_pcap_bytes(&trace.pcap, &config, &LabelPolicy::Sni, "bench")
            .expect("generated pcap ingests");
    let tree = train(
        &Dataset::from_instances(store.instances_at(5)),
        &TrainParams::default(),
    )
    .expect("trainable dataset");
    Fixture {
        pcap: trace.pcap,
        flows: store.flows.into_iter().map(|(f, _)| f).collect(),
        tree,
        config,
    }
}
