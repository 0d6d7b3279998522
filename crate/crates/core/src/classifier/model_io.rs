//! The portable text format for trained trees.
//!
//! ```text
//! c45-model v1 features=36 labels=<s>
//! label <index> <name>
//! node <id> split f=<idx> kind=<le|eq> v=<value> l=<id> r=<id>
//! node <id> leaf label=<idx> counts=<idx>:<n>,...
//! ```
//!
//! Nodes are listed pre-order and ids equal list positions, so node 0 is
//! the root and children always point forward. Thresholds are printed with
//! Rust's shortest round-trip float formatting, which re-serializes
//! byte-identically.

use std::fmt::Write as _;

use thiserror::Error;

use super::{DecisionTree, Node, SplitTest};
use crate::features::FEATURE_COUNT;

#[derive(Debug, Error)]
#[error("model format error at line {line}: {msg}")]
pub struct ModelFormatError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ModelFormatError> {
    Err(ModelFormatError {
        line,
        msg: msg.into(),
    })
}

impl DecisionTree {
    /// Serializes to the text model format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "c45-model v1 features={FEATURE_COUNT} labels={}",
            self.labels.len()
        );
        for (i, name) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "label {i} {name}");
        }
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let (kind, v) = match test {
                        SplitTest::Le(v) => ("le", v),
                        SplitTest::Eq(v) => ("eq", v),
                    };
                    let _ = writeln!(
                        out,
                        "node {id} split f={feature} kind={kind} v={v} l={left} r={right}"
                    );
                }
                Node::Leaf { label, counts, .. } => {
                    let dist: Vec<String> =
                        counts.iter().map(|(l, c)| format!("{l}:{c}")).collect();
                    let _ = writeln!(out, "node {id} leaf label={label} counts={}", dist.join(","));
                }
            }
        }
        out
    }

    /// Parses the text model format, validating structure before returning;
    /// a malformed input never yields a partial tree.
    pub fn deserialize(text: &str) -> Result<DecisionTree, ModelFormatError> {
        let mut lines = text.lines().enumerate();

        let (_, header) = lines.next().ok_or(ModelFormatError {
            line: 1,
            msg: "empty model".into(),
        })?;
        let tokens: Vec<&str> = header.split(' ').collect();
        if tokens.len() != 4 || tokens[0] != "c45-model" || tokens[1] != "v1" {
            return err(1, "expected `c45-model v1 features=N labels=N`");
        }
        let features: usize = parse_kv(tokens[2], "features", 1)?;
        if features != FEATURE_COUNT {
            return err(1, format!("model has {features} features, expected {FEATURE_COUNT}"));
        }
        let label_count: usize = parse_kv(tokens[3], "labels", 1)?;

        let mut labels = Vec::with_capacity(label_count);
        for i in 0..label_count {
            let (lineno, line) = lines
                .next()
                .ok_or(ModelFormatError {
                    line: i + 2,
                    msg: "missing label line".into(),
                })
                .map(|(n, l)| (n + 1, l))?;
            let rest = line
                .strip_prefix("label ")
                .ok_or(ModelFormatError {
                    line: lineno,
                    msg: "expected label line".into(),
                })?;
            let (idx_str, name) = rest.split_once(' ').ok_or(ModelFormatError {
                line: lineno,
                msg: "label line needs index and name".into(),
            })?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| ModelFormatError {
                    line: lineno,
                    msg: "bad label index".into(),
                })?;
            if idx != i {
                return err(lineno, format!("label index {idx} out of order, expected {i}"));
            }
            if name.is_empty() {
                return err(lineno, "empty label name");
            }
            labels.push(name.to_string());
        }

        let mut nodes: Vec<Node> = Vec::new();
        for (lineno0, line) in lines {
            let lineno = lineno0 + 1;
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split(' ').collect();
            if tokens.len() < 3 || tokens[0] != "node" {
                return err(lineno, "expected node line");
            }
            let id: usize = tokens[1].parse().map_err(|_| ModelFormatError {
                line: lineno,
                msg: "bad node id".into(),
            })?;
            if id != nodes.len() {
                return err(lineno, format!("node id {id} out of order, expected {}", nodes.len()));
            }
            match tokens[2] {
                "split" => {
                    if tokens.len() != 8 {
                        return err(lineno, "split node needs f, kind, v, l, r");
                    }
                    let feature: usize = parse_kv(tokens[3], "f", lineno)?;
                    if feature >= FEATURE_COUNT {
                        return err(lineno, format!("feature index {feature} out of range"));
                    }
                    let kind = parse_kv_str(tokens[4], "kind", lineno)?;
                    let v: f64 = parse_kv(tokens[5], "v", lineno)?;
                    if !v.is_finite() {
                        return err(lineno, "split value must be finite");
                    }
                    let left: u32 = parse_kv(tokens[6], "l", lineno)?;
                    let right: u32 = parse_kv(tokens[7], "r", lineno)?;
                    if left as usize <= id || right as usize <= id {
                        return err(lineno, "children must come after their parent");
                    }
                    let test = match kind {
                        "le" => SplitTest::Le(v),
                        "eq" => SplitTest::Eq(v),
                        other => return err(lineno, format!("unknown split kind {other:?}")),
                    };
                    nodes.push(Node::Split {
                        feature,
                        test,
                        left,
                        right,
                    });
                }
                "leaf" => {
                    if tokens.len() != 5 {
                        return err(lineno, "leaf node needs label and counts");
                    }
                    let label: u32 = parse_kv(tokens[3], "label", lineno)?;
                    if label as usize >= labels.len() {
                        return err(lineno, format!("label index {label} out of range"));
                    }
                    let counts_str = parse_kv_str(tokens[4], "counts", lineno)?;
                    let mut counts: Vec<(u32, u32)> = Vec::new();
                    for part in counts_str.split(',') {
                        let (l, c) = part.split_once(':').ok_or(ModelFormatError {
                            line: lineno,
                            msg: "counts entries are idx:count".into(),
                        })?;
                        let l: u32 = l.parse().map_err(|_| ModelFormatError {
                            line: lineno,
                            msg: "bad count label index".into(),
                        })?;
                        let c: u32 = c.parse().map_err(|_| ModelFormatError {
                            line: lineno,
                            msg: "bad count".into(),
                        })?;
                        if l as usize >= labels.len() {
                            return err(lineno, format!("count label index {l} out of range"));
                        }
                        if c == 0 {
                            return err(lineno, "zero count in distribution");
                        }
                        if counts.last().is_some_and(|(prev, _)| *prev >= l) {
                            return err(lineno, "counts must be sorted by label index");
                        }
                        counts.push((l, c));
                    }
                    if counts.is_empty() {
                        return err(lineno, "leaf distribution is empty");
                    }
                    let max = counts.iter().map(|(_, c)| *c).max().unwrap();
                    let argmax = counts.iter().find(|(_, c)| *c == max).unwrap().0;
                    if argmax != label {
                        return err(lineno, "leaf label is not the majority class");
                    }
                    let total: u32 = counts.iter().map(|(_, c)| c).sum();
                    nodes.push(Node::Leaf {
                        label,
                        counts,
                        errors: total - max,
                    });
                }
                other => return err(lineno, format!("unknown node kind {other:?}")),
            }
        }

        if nodes.is_empty() {
            return err(label_count + 2, "model has no nodes");
        }
        // Every node except the root must be referenced exactly once.
        let mut referenced = vec![0u32; nodes.len()];
        for node in &nodes {
            if let Node::Split { left, right, .. } = node {
                for &child in [left, right].into_iter() {
                    if child as usize >= nodes.len() {
                        return err(0, format!("child id {child} out of range"));
                    }
                    referenced[child as usize] += 1;
                }
            }
        }
        if referenced[0] != 0 {
            return err(0, "root must not be referenced as a child");
        }
        if let Some(bad) = (1..nodes.len()).find(|&i| referenced[i] != 1) {
            return err(0, format!("node {bad} referenced {} times", referenced[bad]));
        }

        Ok(DecisionTree { labels, nodes })
    }
}

fn parse_kv_str<'a>(
    token: &'a str,
    key: &str,
    line: usize,
) -> Result<&'a str, ModelFormatError> {
    let (k, v) = token.split_once('=').ok_or(ModelFormatError {
        line,
        msg: format!("expected {key}=..."),
    })?;
    if k != key {
        return err(line, format!("expected field {key:?}, found {k:?}"));
    }
    Ok(v)
}

fn parse_kv<T: std::str::FromStr>(
    token: &str,
    key: &str,
    line: usize,
) -> Result<T, ModelFormatError> {
    parse_kv_str(token, key, line)?
        .parse()
        .map_err(|_| ModelFormatError {
            line,
            msg: format!("bad value for {key}"),
        })
}
