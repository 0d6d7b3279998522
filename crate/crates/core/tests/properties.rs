//! Property tests for the invariants that must hold for arbitrary inputs:
//! chunking-independence of the record scanner, hello build/parse round
//! trips, statistic ordering, and fold partitioning.

use proptest::prelude::*;

use flowid_core::classifier::Dataset;
use flowid_core::eval::stratified_folds;
use flowid_core::eval::synth::{build_client_hello, build_record};
use flowid_core::features::{size_stats, FeatureVector, InstanceMeta, LabeledInstance, FEATURE_COUNT};
use flowid_core::tls::{parse_client_hello, RecordCursor};

fn scan_all(stream: &[u8], cuts: &[usize]) -> (Vec<(u8, u16)>, Vec<u8>) {
    let mut cursor = RecordCursor::new();
    let mut events = Vec::new();
    let mut attribution = Vec::new();
    let mut bounds: Vec<usize> = cuts.iter().map(|c| c % (stream.len() + 1)).collect();
    bounds.push(0);
    bounds.push(stream.len());
    bounds.sort_unstable();
    bounds.dedup();
    for window in bounds.windows(2) {
        let chunk = &stream[window[0]..window[1]];
        let out = cursor.scan_segment(chunk).expect("valid stream");
        events.extend(out.events.iter().map(|e| (e.content_type, e.declared_len)));
        for (ty, range) in out.body_spans {
            for _ in range {
                attribution.push(ty);
            }
        }
    }
    (events, attribution)
}

proptest! {
    /// Any partition of a valid record stream into segments yields the same
    /// record events and the same per-byte attribution.
    #[test]
    fn record_scan_is_chunking_independent(
        records in prop::collection::vec((20u8..=23u8, 0usize..200), 1..8),
        cuts in prop::collection::vec(0usize..4096, 0..12),
    ) {
        let mut stream = Vec::new();
        for (ty, len) in &records {
            stream.extend(build_record(*ty, (3, 3), &vec![0x5a; *len]));
        }
        let whole = scan_all(&stream, &[]);
        let chunked = scan_all(&stream, &cuts);
        prop_assert_eq!(whole, chunked);
    }

    /// parse_client_hello inverts the builder for every parameter tuple the
    /// builder accepts.
    #[test]
    fn client_hello_round_trips(
        sid_len in 0usize..=32,
        n_suites in 1usize..40,
        pad in prop::option::of(0usize..200),
        sni in prop::option::of("[a-zA-Z0-9.-]{1,40}"),
        random in prop::array::uniform32(0u8..),
    ) {
        let sid = vec![0xabu8; sid_len];
        let suites: Vec<u16> = (0..n_suites as u16).map(|i| 0xc000 + i).collect();
        let msg = build_client_hello(&sid, &suites, sni.as_deref(), pad, &random);
        let parsed = parse_client_hello(&msg).expect("builder output parses");
        prop_assert_eq!(parsed.session_id_len as usize, sid_len);
        prop_assert_eq!(parsed.cipher_suites_count as usize, n_suites);
        let had_extensions = sni.is_some() || pad.is_some();
        let expected_sni = sni.map(|s| {
            let mut s = s.to_ascii_lowercase();
            if s.ends_with('.') {
                s.pop();
            }
            s
        });
        prop_assert_eq!(parsed.sni, expected_sni);
        if !had_extensions {
            prop_assert_eq!(parsed.extensions_total_len, 0);
        }
    }

    /// Truncating a ClientHello anywhere never panics; it either errors or
    /// (for truncations landing after the parsed prefix) succeeds.
    #[test]
    fn truncated_client_hello_never_panics(
        cut in 0usize..200,
        sni in prop::option::of("[a-z]{1,20}"),
    ) {
        let msg = build_client_hello(&[1; 16], &[0x2f, 0x35, 0x9c], sni.as_deref(), Some(40), &[9; 32]);
        let cut = cut.min(msg.len());
        let _ = parse_client_hello(&msg[..cut]);
    }

    /// The size statistics are internally ordered for any input.
    #[test]
    fn size_stats_ordering(values in prop::collection::vec(0u32..5000, 0..200)) {
        let sizes: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let s = size_stats(&sizes);
        prop_assert!(s.p25 <= s.p50);
        prop_assert!(s.p50 <= s.p75);
        prop_assert!(s.p75 <= s.max);
        prop_assert!(s.mean <= s.max);
        prop_assert!(s.variance >= 0.0);
    }

    /// Stratified folds partition every index exactly once and respect the
    /// per-label balance bound.
    #[test]
    fn stratified_folds_partition(
        counts in prop::collection::vec(4usize..25, 1..5),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let instances: Vec<LabeledInstance> = counts
            .iter()
            .enumerate()
            .flat_map(|(li, &n)| {
                (0..n).map(move |_| LabeledInstance {
                    features: FeatureVector([0.0; FEATURE_COUNT]),
                    label: format!("label-{li}"),
                    meta: InstanceMeta::default(),
                })
            })
            .collect();
        let total = instances.len();
        let data = Dataset::from_instances(instances);
        let folds = stratified_folds(&data, k, seed).expect("counts >= k by construction");
        let mut seen = vec![0usize; total];
        for fold in &folds {
            for &i in fold {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for (li, &n) in counts.iter().enumerate() {
            let label = format!("label-{li}");
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| data.instances()[i].label == label).count())
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "label {label} with {n}: {per_fold:?}");
        }
    }
}
