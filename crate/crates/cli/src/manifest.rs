//! Run manifests and content hashes.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

/// A file produced by an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: String) -> Self {
        Self { name: name.into(), bytes: text.into_bytes() }
    }

    pub fn binary(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes }
    }

    pub fn is_csv(&self) -> bool {
        self.name.ends_with(".csv")
    }
}

/// Object id git assigns to `bytes` in a SHA-256 repository:
/// `sha256("blob <len>\0" ++ bytes)`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub const MANIFEST_NAME: &str = "manifest.txt";
/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_NAME: &str = "config.conf";

/// Manifest text: what ran, how to repeat it, and a hash of every artifact.
/// `flags` are the run flags that change the artifact set.
pub fn manifest(experiment: &str, seed: u64, flags: &[&str], config_echo: &str, artifacts: &[Artifact]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {experiment}");
    let _ = writeln!(out, "seed: {seed}");
    let _ = writeln!(out, "version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "csv_schema: {CSV_SCHEMA_VERSION}");
    let mut rerun = format!("cellfree-se --config {CONFIG_NAME} --seed {seed} run {experiment}");
    for f in flags {
        rerun.push(' ');
        rerun.push_str(f);
    }
    let _ = writeln!(out, "rerun: {rerun}");
    let _ = writeln!(out, "config_hash: {}", blob_hash(config_echo.as_bytes()));
    out.push_str("artifacts:\n");
    for a in artifacts {
        let _ = writeln!(out, "  {} {} {}", blob_hash(&a.bytes), a.bytes.len(), a.name);
    }
    out.push_str("config:\n");
    for line in config_echo.lines() {
        if line.is_empty() {
            out.push('\n');
        } else {
            let _ = writeln!(out, "  {line}");
        }
    }
    out
}
