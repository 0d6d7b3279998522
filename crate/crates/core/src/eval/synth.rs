//! Deterministic synthetic HTTPS trace generator.
//!
//! Produces a classic pcap of complete TLS-over-TCP sessions — SYN
//! handshake, ClientHello with SNI, server flight with a certificate-sized
//! record, ChangeCipherSpec/Finished exchange, application-data records,
//! FIN close — plus a manifest mapping each flow's 4-tuple to its service
//! name. Flows from all services are interleaved by timestamp. The same
//! seed always yields byte-identical output.
//!
//! Service specs control the signal: application-data sizes are log-normal
//! per direction, inter-arrivals exponential, and handshake header fields
//! fixed per client archetype. [`default_service_specs`] spaces services
//! apart by a difficulty knob — 0 keeps distributions disjoint, 1 collapses
//! them onto each other.

use std::net::Ipv4Addr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use thiserror::Error;

use crate::capture::{build_ethernet_frame, TcpFlags};
use crate::reassembly::Endpoint;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid service spec: {0}")]
    SpecInvalid(String),
}

/// Handshake wire-header profile of one (service, archetype) pair.
#[derive(Debug, Clone)]
pub struct HandshakeProfile {
    pub client_session_id_len: u8,
    pub client_cipher_suite_count: u16,
    pub client_extension_pad: u16,
    pub client_pad_jitter: u16,
    pub server_session_id_len: u8,
    pub server_cipher_suite: u16,
    pub server_extension_pad: u16,
    pub server_pad_jitter: u16,
    /// Size of the certificate-bearing handshake message, jittered per flow.
    pub certificate_bytes_mean: f64,
    pub certificate_bytes_sigma: f64,
}

/// Everything needed to synthesize flows of one service as seen from one
/// client archetype.
#[derive(Debug, Clone)]
pub struct SynthServiceSpec {
    /// Hostname; placed in the ClientHello SNI and in the manifest.
    pub name: String,
    pub client_archetype: String,
    pub handshake: HandshakeProfile,
    /// log-normal (mu, sigma) of client request sizes.
    pub fwd_appdata_size: (f64, f64),
    /// log-normal (mu, sigma) of server response message sizes. Responses
    /// larger than the record-size preference span several packets.
    pub bwd_appdata_size: (f64, f64),
    /// Preferred server record size: the TLS stack emits response bytes in
    /// records of roughly this many bytes, a habit of the client/server
    /// library pairing.
    pub bwd_record_size_pref: f64,
    /// Geometric-like application message count over min..=max.
    pub appdata_count_p: f64,
    pub appdata_count_min: u32,
    pub appdata_count_max: u32,
    /// Exponential inter-arrival means in microseconds, per sender.
    pub fwd_iat_mean_micros: f64,
    pub bwd_iat_mean_micros: f64,
}

impl SynthServiceSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::SpecInvalid(m));
        if self.name.is_empty() {
            return fail("empty service name".into());
        }
        if self.handshake.client_session_id_len > 32 || self.handshake.server_session_id_len > 32
        {
            return fail(format!("{}: session id above 32 bytes", self.name));
        }
        if self.handshake.client_cipher_suite_count == 0 {
            return fail(format!("{}: at least one cipher suite required", self.name));
        }
        if self.handshake.certificate_bytes_mean <= 0.0 {
            return fail(format!("{}: certificate size must be positive", self.name));
        }
        if !(0.0 < self.appdata_count_p && self.appdata_count_p < 1.0) {
            return fail(format!("{}: count parameter must be in (0,1)", self.name));
        }
        if self.appdata_count_min == 0 || self.appdata_count_min > self.appdata_count_max {
            return fail(format!("{}: count range must satisfy 1 <= min <= max", self.name));
        }
        for (mu, sigma) in [self.fwd_appdata_size, self.bwd_appdata_size] {
            if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
                return fail(format!("{}: bad size distribution", self.name));
            }
        }
        if !(64.0..=1380.0).contains(&self.bwd_record_size_pref) {
            return fail(format!(
                "{}: record size preference must be within 64..=1380",
                self.name
            ));
        }
        if self.fwd_iat_mean_micros <= 0.0 || self.bwd_iat_mean_micros <= 0.0 {
            return fail(format!("{}: inter-arrival means must be positive", self.name));
        }
        Ok(())
    }
}

/// One generated flow, for the manifest and partition bookkeeping.
#[derive(Debug, Clone)]
pub struct SynthFlowRecord {
    pub client: Endpoint,
    pub server: Endpoint,
    pub service: String,
    pub archetype: String,
}

/// A generated trace: pcap bytes plus per-flow ground truth.
#[derive(Debug, Clone)]
pub struct SynthTrace {
    pub pcap: Vec<u8>,
    pub flows: Vec<SynthFlowRecord>,
}

impl SynthTrace {
    /// Label manifest: one `client:port-server:port label` line per flow.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for f in &self.flows {
            out.push_str(&format!("{}-{} {}\n", f.client, f.server, f.service));
        }
        out
    }
}

const TRACE_BASE_MICROS: u64 = 1_700_000_000_000_000;
const TRACE_WINDOW_MICROS: u64 = 10_000_000;
const MSS: usize = 1400;

/// Generates `flows_per_service` flows for every spec, interleaved by
/// timestamp, as a classic little-endian microsecond pcap.
pub fn synth_generate(
    specs: &[SynthServiceSpec],
    flows_per_service: usize,
    seed: u64,
) -> Result<SynthTrace, SynthError> {
    if specs.is_empty() {
        return Err(SynthError::SpecInvalid("no service specs".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for spec in specs {
        spec.validate()?;
        if !seen.insert((spec.name.clone(), spec.client_archetype.clone())) {
            return Err(SynthError::SpecInvalid(format!(
                "duplicate spec for {} / {}",
                spec.name, spec.client_archetype
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames: Vec<(u64, Vec<u8>)> = Vec::new();
    let mut flows = Vec::new();
    let mut flow_counter: u32 = 0;

    for spec in specs {
        for _ in 0..flows_per_service {
            let start = TRACE_BASE_MICROS + rng.gen_range(0..TRACE_WINDOW_MICROS);
            let record = gen_flow(spec, start, flow_counter, &mut rng, &mut frames);
            flows.push(record);
            flow_counter += 1;
        }
    }

    // Interleave all flows; stable sort keeps generation order on ties.
    frames.sort_by_key(|(ts, _)| *ts);
    Ok(SynthTrace {
        pcap: write_pcap(&frames),
        flows,
    })
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct FlowBuilder<'a> {
    client: Endpoint,
    server: Endpoint,
    ts: u64,
    cseq: u32,
    sseq: u32,
    frames: &'a mut Vec<(u64, Vec<u8>)>,
}

impl FlowBuilder<'_> {
    fn send(&mut self, from_client: bool, flags: u8, payload: &[u8], gap_micros: u64) {
        self.ts += gap_micros;
        let (src, dst, seq, ack) = if from_client {
            (self.client, self.server, self.cseq, self.sseq)
        } else {
            (self.server, self.client, self.sseq, self.cseq)
        };
        let frame = build_ethernet_frame(
            src.ip, dst.ip, src.port, dst.port, seq, ack, flags, payload,
        );
        self.frames.push((self.ts, frame));
        let consumed =
            payload.len() as u32 + u32::from(flags & (TcpFlags::SYN | TcpFlags::FIN) != 0);
        if from_client {
            self.cseq = self.cseq.wrapping_add(consumed);
        } else {
            self.sseq = self.sseq.wrapping_add(consumed);
        }
    }
}

fn gen_flow(
    spec: &SynthServiceSpec,
    start: u64,
    idx: u32,
    rng: &mut ChaCha8Rng,
    frames: &mut Vec<(u64, Vec<u8>)>,
) -> SynthFlowRecord {
    let arch_octet = (fnv(spec.client_archetype.as_bytes()) % 200) as u8;
    let client = Endpoint {
        ip: Ipv4Addr::new(10, arch_octet, (idx / 40_000) as u8, 10),
        port: 20_000 + (idx % 40_000) as u16,
    };
    let h = fnv(spec.name.as_bytes());
    let server = Endpoint {
        ip: Ipv4Addr::new(203, 0, (h >> 8) as u8, h as u8),
        port: 443,
    };

    let rtt = rng.gen_range(8_000..40_000u64);
    let mut b = FlowBuilder {
        client,
        server,
        ts: start,
        cseq: rng.gen(),
        sseq: rng.gen(),
        frames,
    };

    // TCP handshake.
    b.send(true, TcpFlags::SYN, &[], 0);
    b.send(false, TcpFlags::SYN | TcpFlags::ACK, &[], rtt / 2);
    b.send(true, TcpFlags::ACK, &[], rtt / 2);

    // ClientHello.
    let hs = &spec.handshake;
    let mut random = [0u8; 32];
    rng.fill_bytes(&mut random);
    let mut session_id = [0u8; 32];
    rng.fill_bytes(&mut session_id);
    let suites: Vec<u16> = (0..hs.client_cipher_suite_count)
        .map(|i| 0x1300 + i)
        .collect();
    let pad = hs.client_extension_pad + jitter(rng, hs.client_pad_jitter);
    let ch = build_client_hello(
        &session_id[..hs.client_session_id_len as usize],
        &suites,
        Some(&spec.name),
        Some(pad as usize),
        &random,
    );
    b.send(
        true,
        TcpFlags::ACK | TcpFlags::PSH,
        &build_record(22, (3, 1), &ch),
        rng.gen_range(200..1_500),
    );

    // Server flight: ServerHello + Certificate + ServerHelloDone in one
    // byte stream, segmented at MSS.
    let mut srandom = [0u8; 32];
    rng.fill_bytes(&mut srandom);
    let spad = hs.server_extension_pad + jitter(rng, hs.server_pad_jitter);
    let sh = build_server_hello(
        &session_id[..hs.server_session_id_len as usize],
        hs.server_cipher_suite,
        Some(spad as usize),
        &srandom,
    );
    let cert_len = Normal::new(hs.certificate_bytes_mean, hs.certificate_bytes_sigma.max(1.0))
        .expect("valid normal")
        .sample(rng)
        .clamp(600.0, 12_000.0) as usize;
    let certificate = build_handshake_message(11, &vec![0xCE; cert_len]);
    let hello_done = build_handshake_message(14, &[]);
    let mut flight = build_record(22, (3, 3), &sh);
    flight.extend(build_record(22, (3, 3), &certificate));
    flight.extend(build_record(22, (3, 3), &hello_done));
    let mut first = true;
    for chunk in flight.chunks(MSS) {
        let gap = if first { rtt } else { rng.gen_range(40..300) };
        first = false;
        b.send(false, TcpFlags::ACK, chunk, gap);
    }
    b.send(true, TcpFlags::ACK, &[], rtt / 2);

    // Client key exchange, ChangeCipherSpec, Finished.
    let mut client_flight = build_record(22, (3, 3), &build_handshake_message(16, &[0x4b; 66]));
    client_flight.extend(build_record(20, (3, 3), &[1]));
    client_flight.extend(build_record(22, (3, 3), &[0xF1; 40]));
    b.send(
        true,
        TcpFlags::ACK | TcpFlags::PSH,
        &client_flight,
        rng.gen_range(500..3_000),
    );

    // Server ChangeCipherSpec + Finished.
    let mut server_fin = build_record(20, (3, 3), &[1]);
    server_fin.extend(build_record(22, (3, 3), &[0xF2; 40]));
    b.send(false, TcpFlags::ACK | TcpFlags::PSH, &server_fin, rtt);

    // Application data, message by message: the first is the client
    // request, then mostly server responses with a follow-up request every
    // 3rd message. A response larger than the stack's preferred record size
    // spans several back-to-back packets.
    let count = sample_count(
        rng,
        spec.appdata_count_p,
        spec.appdata_count_min,
        spec.appdata_count_max,
    );
    let fwd_size = LogNormal::new(spec.fwd_appdata_size.0, spec.fwd_appdata_size.1.max(1e-6))
        .expect("valid lognormal");
    let bwd_size = LogNormal::new(spec.bwd_appdata_size.0, spec.bwd_appdata_size.1.max(1e-6))
        .expect("valid lognormal");
    let fwd_gap = Exp::new(1.0 / spec.fwd_iat_mean_micros).expect("valid exp");
    let bwd_gap = Exp::new(1.0 / spec.bwd_iat_mean_micros).expect("valid exp");
    for i in 0..count {
        let from_client = i == 0 || i % 3 == 0;
        if from_client {
            // Follow-up requests (cookie-laden fetches, uploads) run larger
            // than the opening request.
            let scale = if i > 0 { 2.2 } else { 1.0 };
            let body_len =
                ((fwd_size.sample(rng) * scale).round() as usize).clamp(16, MSS - 20);
            let gap = if i == 0 {
                rng.gen_range(300..1_200)
            } else {
                fwd_gap.sample(rng).max(1.0) as u64
            };
            b.send(
                true,
                TcpFlags::ACK | TcpFlags::PSH,
                &build_record(23, (3, 3), &vec![0xED; body_len]),
                gap,
            );
        } else {
            let mut remaining = (bwd_size.sample(rng).round() as usize).clamp(16, 24_000);
            let mut gap = if i == 1 {
                rtt + bwd_gap.sample(rng).max(1.0) as u64
            } else {
                bwd_gap.sample(rng).max(1.0) as u64
            };
            while remaining > 0 {
                let wobble: f64 = Normal::new(0.0, 0.06).expect("valid normal").sample(rng);
                let pref = (spec.bwd_record_size_pref * wobble.exp())
                    .clamp(64.0, (MSS - 20) as f64) as usize;
                let part = remaining.min(pref);
                b.send(
                    false,
                    TcpFlags::ACK | TcpFlags::PSH,
                    &build_record(23, (3, 3), &vec![0xED; part]),
                    gap,
                );
                remaining -= part;
                // Continuation records of one message follow back to back.
                gap = rng.gen_range(30..150);
            }
        }
    }

    // Orderly close.
    b.send(true, TcpFlags::FIN | TcpFlags::ACK, &[], rng.gen_range(800..4_000));
    b.send(false, TcpFlags::FIN | TcpFlags::ACK, &[], rtt / 2);
    b.send(true, TcpFlags::ACK, &[], rtt / 2);

    SynthFlowRecord {
        client,
        server,
        service: spec.name.clone(),
        archetype: spec.client_archetype.clone(),
    }
}

fn jitter(rng: &mut ChaCha8Rng, bound: u16) -> u16 {
    if bound == 0 {
        0
    } else {
        rng.gen_range(0..=bound)
    }
}

fn sample_count(rng: &mut ChaCha8Rng, p: f64, min: u32, max: u32) -> u32 {
    let mut count = min;
    while count < max && rng.gen::<f64>() > p {
        count += 1;
    }
    count
}

/// Builds the default spec family: `services × archetypes` specs whose
/// separability is controlled by `difficulty` (0 = disjoint distributions,
/// 1 = heavily overlapping). Service names have a fixed width so the SNI
/// never betrays the service through the extension length.
pub fn default_service_specs(
    services: usize,
    archetypes: usize,
    difficulty: f64,
) -> Vec<SynthServiceSpec> {
    let difficulty = difficulty.clamp(0.0, 1.0);
    let spread = 1.0 - difficulty;
    let mut specs = Vec::with_capacity(services * archetypes);
    for a in 0..archetypes {
        for s in 0..services {
            let resp_rank = ((s + services / 2) % services.max(1)) as f64;
            specs.push(SynthServiceSpec {
                name: format!("svc{s:02}.example.test"),
                client_archetype: format!("arch{a}"),
                handshake: HandshakeProfile {
                    client_session_id_len: [0, 32, 16, 8, 24][a % 5],
                    client_cipher_suite_count: 12 + 8 * a as u16,
                    client_extension_pad: 40 + 36 * a as u16,
                    client_pad_jitter: 8,
                    server_session_id_len: 32,
                    server_cipher_suite: 0xc000 + 0x10 * a as u16 + (s % 2) as u16,
                    server_extension_pad: 8 + 5 * (s % 3) as u16,
                    server_pad_jitter: 10,
                    certificate_bytes_mean: 2_200.0 + 160.0 * ((s + 1) % 4) as f64,
                    certificate_bytes_sigma: 280.0,
                },
                fwd_appdata_size: (
                    (90.0f64).ln() + 0.34 * s as f64 * spread,
                    0.30 + 0.20 * difficulty,
                ),
                bwd_appdata_size: (
                    (260.0f64).ln() + 0.56 * resp_rank * spread,
                    0.15 + 0.30 * difficulty,
                ),
                bwd_record_size_pref: [1100.0, 850.0, 600.0, 460.0, 330.0][a % 5],
                appdata_count_p: 0.22,
                appdata_count_min: 2,
                appdata_count_max: 12,
                fwd_iat_mean_micros: 3_500.0,
                bwd_iat_mean_micros: 2_500.0 + 2_200.0 * resp_rank * spread,
            });
        }
    }
    specs
}

/// Serializes timestamped frames as a classic little-endian microsecond
/// pcap (linktype Ethernet, snaplen 65535).
pub fn write_pcap(frames: &[(u64, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + frames.iter().map(|(_, f)| 16 + f.len()).sum::<usize>());
    out.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65_535u32.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    for (ts, frame) in frames {
        out.extend_from_slice(&((ts / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((ts % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(frame);
    }
    out
}

/// Frames a TLS record around `body`.
pub fn build_record(content_type: u8, version: (u8, u8), body: &[u8]) -> Vec<u8> {
    assert!(body.len() <= 1 << 14, "record body above 2^14");
    let mut out = Vec::with_capacity(5 + body.len());
    out.push(content_type);
    out.push(version.0);
    out.push(version.1);
    out.extend_from_slice(&(body.len() as u16).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Frames a handshake message: type byte plus 24-bit length.
pub fn build_handshake_message(msg_type: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.push(msg_type);
    let len = body.len() as u32;
    out.extend_from_slice(&[(len >> 16) as u8, (len >> 8) as u8, len as u8]);
    out.extend_from_slice(body);
    out
}

/// Builds a ClientHello handshake message (with message header). `pad_body_len`
/// appends a padding extension of that body size so the extensions length is
/// controllable.
pub fn build_client_hello(
    session_id: &[u8],
    cipher_suites: &[u16],
    sni: Option<&str>,
    pad_body_len: Option<usize>,
    random: &[u8; 32],
) -> Vec<u8> {
    assert!(session_id.len() <= 32);
    assert!(!cipher_suites.is_empty());
    let mut body = Vec::new();
    body.extend_from_slice(&[3, 3]);
    body.extend_from_slice(random);
    body.push(session_id.len() as u8);
    body.extend_from_slice(session_id);
    body.extend_from_slice(&((cipher_suites.len() * 2) as u16).to_be_bytes());
    for suite in cipher_suites {
        body.extend_from_slice(&suite.to_be_bytes());
    }
    body.push(1);
    body.push(0); // null compression

    let mut extensions = Vec::new();
    if let Some(host) = sni {
        let name = host.as_bytes();
        let mut ext = Vec::with_capacity(5 + name.len());
        ext.extend_from_slice(&((name.len() + 3) as u16).to_be_bytes()); // list length
        ext.push(0); // host_name
        ext.extend_from_slice(&(name.len() as u16).to_be_bytes());
        ext.extend_from_slice(name);
        extensions.extend_from_slice(&0u16.to_be_bytes());
        extensions.extend_from_slice(&(ext.len() as u16).to_be_bytes());
        extensions.extend_from_slice(&ext);
    }
    if let Some(pad) = pad_body_len {
        extensions.extend_from_slice(&21u16.to_be_bytes()); // padding extension
        extensions.extend_from_slice(&(pad as u16).to_be_bytes());
        extensions.extend(std::iter::repeat_n(0, pad));
    }
    if !extensions.is_empty() {
        body.extend_from_slice(&(extensions.len() as u16).to_be_bytes());
        body.extend_from_slice(&extensions);
    }
    build_handshake_message(1, &body)
}

/// Builds a ServerHello handshake message (with message header).
pub fn build_server_hello(
    session_id: &[u8],
    cipher_suite: u16,
    pad_body_len: Option<usize>,
    random: &[u8; 32],
) -> Vec<u8> {
    assert!(session_id.len() <= 32);
    let mut body = Vec::new();
    body.extend_from_slice(&[3, 3]);
    body.extend_from_slice(random);
    body.push(session_id.len() as u8);
    body.extend_from_slice(session_id);
    body.extend_from_slice(&cipher_suite.to_be_bytes());
    body.push(0); // null compression
    if let Some(pad) = pad_body_len {
        let mut extensions = Vec::new();
        extensions.extend_from_slice(&21u16.to_be_bytes());
        extensions.extend_from_slice(&(pad as u16).to_be_bytes());
        extensions.extend(std::iter::repeat_n(0, pad));
        body.extend_from_slice(&(extensions.len() as u16).to_be_bytes());
        body.extend_from_slice(&extensions);
    }
    build_handshake_message(2, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_byte_identical() {
        let specs = default_service_specs(2, 1, 0.0);
        let a = synth_generate(&specs, 3, 99).unwrap();
        let b = synth_generate(&specs, 3, 99).unwrap();
        assert_eq!(a.pcap, b.pcap);
        assert_eq!(a.manifest(), b.manifest());
        let c = synth_generate(&specs, 3, 100).unwrap();
        assert_ne!(a.pcap, c.pcap);
    }

    #[test]
    fn manifest_has_one_line_per_flow() {
        let specs = default_service_specs(5, 1, 0.0);
        let trace = synth_generate(&specs, 20, 1).unwrap();
        assert_eq!(trace.flows.len(), 100);
        assert_eq!(trace.manifest().lines().count(), 100);
        for f in &trace.flows {
            assert!(f.service.starts_with("svc"));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut specs = default_service_specs(1, 1, 0.0);
        specs[0].appdata_count_min = 0;
        assert!(matches!(
            synth_generate(&specs, 1, 0),
            Err(SynthError::SpecInvalid(_))
        ));
        let specs = default_service_specs(1, 1, 0.0);
        let doubled = vec![specs[0].clone(), specs[0].clone()];
        assert!(synth_generate(&doubled, 1, 0).is_err());
        assert!(synth_generate(&[], 1, 0).is_err());
    }

    #[test]
    fn timestamps_are_non_decreasing() {
        let specs = default_service_specs(3, 2, 0.3);
        let trace = synth_generate(&specs, 5, 7).unwrap();
        let mut reader = crate::capture::PcapReader::new(&trace.pcap[..]).unwrap();
        use crate::capture::PacketSource;
        let mut last = 0u64;
        let mut n = 0;
        while let Some(pkt) = reader.next_packet().unwrap() {
            assert!(pkt.ts_micros >= last);
            last = pkt.ts_micros;
            n += 1;
        }
        assert!(n > 100);
    }
}
