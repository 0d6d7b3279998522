//! The 36 statistical features computed over a flow's handshake packets and
//! its first `d` application-data packets.
//!
//! Feature order is fixed and shared by training, inference, the CSV file
//! format and the model file format:
//!
//! * 0–8: forward common — packet size (mean, p25, p50, p75, variance,
//!   max) and inter-arrival time (p25, p50, p75)
//! * 9–17: backward common — the same nine
//! * 18–20: ClientHello — session id length, cipher suite count,
//!   extensions length
//! * 21–23: ServerHello — session id length, chosen cipher suite
//!   (categorical), extensions length
//! * 24–29: forward application-data packet sizes (six statistics)
//! * 30–35: backward application-data packet sizes
//!
//! Percentiles use the nearest-rank method; variance is the population
//! variance; statistics of an empty set are 0.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::reassembly::{Direction, PacketSample, ReadyFlow};

/// Number of features in a vector.
pub const FEATURE_COUNT: usize = 36;

/// Index of the chosen-cipher-suite feature, the one categorical column.
pub const CIPHER_SUITE_FEATURE_INDEX: usize = 22;

/// Canonical column names, in feature order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "fwd_pkt_size_mean",
    "fwd_pkt_size_p25",
    "fwd_pkt_size_p50",
    "fwd_pkt_size_p75",
    "fwd_pkt_size_var",
    "fwd_pkt_size_max",
    "fwd_iat_p25",
    "fwd_iat_p50",
    "fwd_iat_p75",
    "bwd_pkt_size_mean",
    "bwd_pkt_size_p25",
    "bwd_pkt_size_p50",
    "bwd_pkt_size_p75",
    "bwd_pkt_size_var",
    "bwd_pkt_size_max",
    "bwd_iat_p25",
    "bwd_iat_p50",
    "bwd_iat_p75",
    "ch_session_id_len",
    "ch_cipher_suites_count",
    "ch_extensions_len",
    "sh_session_id_len",
    "sh_cipher_suite",
    "sh_extensions_len",
    "fwd_app_pkt_size_mean",
    "fwd_app_pkt_size_p25",
    "fwd_app_pkt_size_p50",
    "fwd_app_pkt_size_p75",
    "fwd_app_pkt_size_var",
    "fwd_app_pkt_size_max",
    "bwd_app_pkt_size_mean",
    "bwd_app_pkt_size_p25",
    "bwd_app_pkt_size_p50",
    "bwd_app_pkt_size_p75",
    "bwd_app_pkt_size_var",
    "bwd_app_pkt_size_max",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty input")]
    EmptyInput,
    #[error("feature CSV schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("feature CSV line {line}: {msg}")]
    BadRow { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One flow's features in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A feature vector with its ground-truth service label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub features: FeatureVector,
    pub label: String,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMeta {
    /// `client:port-server:port` of the originating flow.
    pub flow: String,
    /// Identifier of the trace the flow came from.
    pub trace: String,
    /// Application-data packets the flow had available.
    pub appdata_available: usize,
}

/// Nearest-rank percentile: the element at 1-based index `ceil(p/100 * n)`
/// of the ascending sort.
pub fn percentile(values: &[f64], p: u8) -> Result<f64, FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    debug_assert!((1..=100).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    Ok(sorted[rank - 1])
}

/// The six packet-size statistics. Empty input yields all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SizeStats {
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub variance: f64,
    pub max: f64,
}

impl SizeStats {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.mean,
            self.p25,
            self.p50,
            self.p75,
            self.variance,
            self.max,
        ]
    }
}

pub fn size_stats(sizes: &[f64]) -> SizeStats {
    if sizes.is_empty() {
        return SizeStats::default();
    }
    let n = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let variance = sizes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let max = sizes.iter().copied().fold(f64::MIN, f64::max);
    SizeStats {
        mean,
        p25: percentile(sizes, 25).unwrap(),
        p50: percentile(sizes, 50).unwrap(),
        p75: percentile(sizes, 75).unwrap(),
        variance,
        max,
    }
}

/// Percentiles of successive gaps between ascending timestamps, in
/// microseconds. Fewer than two timestamps yield zeros.
pub fn iat_percentiles(timestamps: &[u64]) -> [f64; 3] {
    if timestamps.len() < 2 {
        return [0.0; 3];
    }
    let gaps: Vec<f64> = timestamps
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    [
        percentile(&gaps, 25).unwrap(),
        percentile(&gaps, 50).unwrap(),
        percentile(&gaps, 75).unwrap(),
    ]
}

/// Computes the 36-feature vector of a ready flow at threshold `d`.
///
/// The common features cover the handshake packets plus the first
/// `min(d, available)` application-data packets of each direction; the
/// application-data features cover only that capped window. Handshake
/// header features default to 0 when the corresponding hello was never
/// seen. Deterministic: the same flow and `d` give the same vector
/// bit for bit.
pub fn extract(flow: &ReadyFlow, d_threshold: usize) -> FeatureVector {
    let capped: Vec<&PacketSample> = flow.appdata_pkts.iter().take(d_threshold).collect();
    let mut out = [0f64; FEATURE_COUNT];

    for (base, dir) in [(0usize, Direction::Forward), (9, Direction::Backward)] {
        let mut sizes: Vec<f64> = Vec::new();
        let mut stamps: Vec<u64> = Vec::new();
        for p in flow.handshake_pkts.iter().filter(|p| p.dir == dir) {
            sizes.push(p.payload_len as f64);
            stamps.push(p.ts_micros);
        }
        for p in capped.iter().filter(|p| p.dir == dir) {
            sizes.push(p.payload_len as f64);
            stamps.push(p.ts_micros);
        }
        stamps.sort_unstable();
        out[base..base + 6].copy_from_slice(&size_stats(&sizes).as_array());
        out[base + 6..base + 9].copy_from_slice(&iat_percentiles(&stamps));
    }

    if let Some(ch) = &flow.client_hello {
        out[18] = ch.session_id_len as f64;
        out[19] = ch.cipher_suites_count as f64;
        out[20] = ch.extensions_total_len as f64;
    }
    if let Some(sh) = &flow.server_hello {
        out[21] = sh.session_id_len as f64;
        out[22] = sh.chosen_cipher_suite as f64;
        out[23] = sh.extensions_total_len as f64;
    }

    for (base, dir) in [(24usize, Direction::Forward), (30, Direction::Backward)] {
        let sizes: Vec<f64> = capped
            .iter()
            .filter(|p| p.dir == dir)
            .map(|p| p.payload_len as f64)
            .collect();
        out[base..base + 6].copy_from_slice(&size_stats(&sizes).as_array());
    }

    FeatureVector(out)
}

/// Formats one value for the feature CSV: integers bare, anything else
/// with nine significant digits.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.007_199_254_740_992e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.8e}")
    }
}

/// Writes the feature CSV: the canonical header, one row per instance,
/// LF line endings.
pub fn write_csv<W: Write>(out: &mut W, instances: &[LabeledInstance]) -> Result<(), FeatureError> {
    let mut header = FEATURE_NAMES.join(",");
    header.push_str(",label,meta_flow,meta_trace,meta_appdata");
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for inst in instances {
        let mut row = String::new();
        for (i, v) in inst.features.0.iter().enumerate() {
            if i > 0 {
                row.push(',');
            }
            row.push_str(&format_value(*v));
        }
        row.push(',');
        row.push_str(&inst.label);
        row.push(',');
        row.push_str(&inst.meta.flow);
        row.push(',');
        row.push_str(&inst.meta.trace);
        row.push(',');
        row.push_str(&inst.meta.appdata_available.to_string());
        row.push('\n');
        out.write_all(row.as_bytes())?;
    }
    Ok(())
}

/// Reads a feature CSV produced by [`write_csv`], validating the schema.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<LabeledInstance>, FeatureError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| FeatureError::SchemaMismatch("empty file".into()))??;
    let expected: Vec<&str> = FEATURE_NAMES
        .iter()
        .copied()
        .chain(["label", "meta_flow", "meta_trace", "meta_appdata"])
        .collect();
    let got: Vec<&str> = header.split(',').collect();
    if got != expected {
        return Err(FeatureError::SchemaMismatch(format!(
            "expected {} columns of the canonical schema, got {}",
            expected.len(),
            got.len()
        )));
    }

    let mut instances = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 4 {
            return Err(FeatureError::BadRow {
                line: lineno,
                msg: format!("{} fields, expected {}", fields.len(), FEATURE_COUNT + 4),
            });
        }
        let mut values = [0f64; FEATURE_COUNT];
        for (i, field) in fields[..FEATURE_COUNT].iter().enumerate() {
            values[i] = field.parse().map_err(|_| FeatureError::BadRow {
                line: lineno,
                msg: format!("bad number {field:?} in column {}", FEATURE_NAMES[i]),
            })?;
        }
        let label = fields[FEATURE_COUNT].to_string();
        if label.is_empty() {
            return Err(FeatureError::BadRow {
                line: lineno,
                msg: "empty label".into(),
            });
        }
        instances.push(LabeledInstance {
            features: FeatureVector(values),
            label,
            meta: InstanceMeta {
                flow: fields[FEATURE_COUNT + 1].to_string(),
                trace: fields[FEATURE_COUNT + 2].to_string(),
                appdata_available: fields[FEATURE_COUNT + 3].parse().map_err(|_| {
                    FeatureError::BadRow {
                        line: lineno,
                        msg: "bad meta_appdata".into(),
                    }
                })?,
            },
        });
    }
    Ok(instances)
}
