//! Shared helpers for the subcommands.

use std::path::Path;

use anyhow::{bail, Context};
use flowid_core::pipeline::{parse_manifest, LabelPolicy, PipelineConfig};

/// Writes a file atomically: to a temporary sibling first, renamed into
/// place on success, so failures never leave partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .with_context(|| format!("creating temporary file near {}", path.display()))?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parses `--labels sni` or `--labels manifest:PATH`.
pub fn parse_label_policy(spec: &str) -> anyhow::Result<LabelPolicy> {
    if spec == "sni" {
        return Ok(LabelPolicy::Sni);
    }
    if let Some(path) = spec.strip_prefix("manifest:") {
        let file = std::fs::File::open(path).with_context(|| format!("opening manifest {path}"))?;
        let map = parse_manifest(std::io::BufReader::new(file))?;
        return Ok(LabelPolicy::Manifest(map));
    }
    bail!("--labels must be `sni` or `manifest:PATH`, got {spec:?}");
}

/// Parses `--port-filter 443` or `--port-filter none`.
pub fn parse_port_filter(spec: &str) -> anyhow::Result<Option<u16>> {
    if spec == "none" {
        return Ok(None);
    }
    let port: u16 = spec
        .parse()
        .with_context(|| format!("--port-filter must be a port or `none`, got {spec:?}"))?;
    Ok(Some(port))
}

/// Parses a comma-separated threshold list such as `0,1,2,5,9`.
pub fn parse_d_list(spec: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<usize>()
                .with_context(|| format!("bad threshold {part:?} in list {spec:?}"))?,
        );
    }
    if out.is_empty() {
        bail!("empty threshold list {spec:?}");
    }
    Ok(out)
}

/// Pipeline configuration shared by the pcap-consuming commands.
pub fn pipeline_config(d_threshold: usize, port_filter: Option<u16>) -> PipelineConfig {
    PipelineConfig {
        d_threshold,
        port_filter,
        ..Default::default()
    }
}
