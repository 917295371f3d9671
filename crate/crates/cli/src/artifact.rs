//! Output files with embedded provenance, plus timestamp sidecars.
//!
//! JSONL files start with a header line, JSON objects carry an `artrec` key,
//! and text or CSV files start with a `# artrec` comment line. Timestamps only
//! ever go to `<file>.meta.json` so primary outputs stay byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use artrec_core::seeds::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;
const HEADER_KEY: &str = "artrec";
const TEXT_PREFIX: &str = "# artrec ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: u32,
    pub kind: String,
    pub config_hash: String,
    /// Input file name to SHA-256 of its full contents.
    pub inputs: BTreeMap<String, String>,
}

/// A file read back in, with its header stripped.
#[derive(Debug)]
pub struct Input {
    pub name: String,
    pub sha256: String,
    pub provenance: Provenance,
    pub body: Vec<u8>,
}

pub struct Run {
    pub dir: PathBuf,
    pub config_hash: String,
    command: String,
}

impl Run {
    pub fn new(out: &Path, config_hash: String) -> Self {
        Self {
            dir: out.join(&config_hash[..16]),
            config_hash,
            command: std::env::args().collect::<Vec<_>>().join(" "),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Run-relative name when the file is inside the run, else the path as given.
    pub fn display_name(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn provenance(&self, kind: &str, inputs: &[&Input]) -> Provenance {
        Provenance {
            schema: SCHEMA_VERSION,
            kind: kind.into(),
            config_hash: self.config_hash.clone(),
            inputs: inputs.iter().map(|i| (i.name.clone(), i.sha256.clone())).collect(),
        }
    }

    /// Resolves `path` against the run directory when it is relative and present there.
    pub fn locate(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            let inside = self.dir.join(path);
            if inside.exists() {
                return inside;
            }
        }
        path.to_path_buf()
    }

    pub fn read(&self, path: &Path, kind: &str) -> Result<Input> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let name = self.display_name(path);
        let (provenance, body) = split_header(&bytes)
            .with_context(|| format!("{name}: not an artrec output"))?;
        if provenance.schema != SCHEMA_VERSION {
            bail!("{name}: schema version {} (expected {SCHEMA_VERSION})", provenance.schema);
        }
        if provenance.kind != kind {
            bail!("{name}: holds `{}`, expected `{kind}`", provenance.kind);
        }
        Ok(Input {
            name,
            sha256: sha256_hex(&bytes),
            provenance,
            body,
        })
    }

    pub fn write_jsonl(&self, rel: &str, kind: &str, inputs: &[&Input], body: &[u8]) -> Result<PathBuf> {
        let header = serde_json::json!({ HEADER_KEY: self.provenance(kind, inputs) });
        let mut bytes = header.to_string().into_bytes();
        bytes.push(b'\n');
        bytes.extend_from_slice(body);
        self.emit(rel, &bytes)
    }

    /// `value` must be a JSON object; the provenance goes under `artrec`.
    pub fn write_json(&self, rel: &str, kind: &str, inputs: &[&Input], value: Value) -> Result<PathBuf> {
        let Value::Object(mut map) = value else {
            bail!("{rel}: expected a JSON object");
        };
        map.insert(HEADER_KEY.into(), serde_json::to_value(self.provenance(kind, inputs))?);
        let mut text = serde_json::to_string_pretty(&map)?;
        text.push('\n');
        self.emit(rel, text.as_bytes())
    }

    pub fn write_text(&self, rel: &str, kind: &str, inputs: &[&Input], body: &str) -> Result<PathBuf> {
        let header = serde_json::to_string(&self.provenance(kind, inputs))?;
        self.emit(rel, format!("{TEXT_PREFIX}{header}\n{body}").as_bytes())
    }

    fn emit(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let meta = serde_json::json!({
            "created_at": chrono::Utc::now().to_rfc3339(),
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config_hash,
        });
        let mut meta_path = path.clone().into_os_string();
        meta_path.push(".meta.json");
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Recognizes all three header styles.
fn split_header(bytes: &[u8]) -> Option<(Provenance, Vec<u8>)> {
    if let Some(rest) = bytes.strip_prefix(TEXT_PREFIX.as_bytes()) {
        let end = rest.iter().position(|&b| b == b'\n')?;
        let p = serde_json::from_slice(&rest[..end]).ok()?;
        return Some((p, rest[end + 1..].to_vec()));
    }
    let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    if let Ok(Value::Object(mut first)) = serde_json::from_slice::<Value>(&bytes[..end]) {
        if first.len() == 1 {
            let p = serde_json::from_value(first.remove(HEADER_KEY)?).ok()?;
            return Some((p, bytes.get(end + 1..).unwrap_or_default().to_vec()));
        }
    }
    let Value::Object(mut whole) = serde_json::from_slice::<Value>(bytes).ok()? else {
        return None;
    };
    let p = serde_json::from_value(whole.remove(HEADER_KEY)?).ok()?;
    Some((p, serde_json::to_vec(&whole).ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_round_trip_in_every_style() {
        let dir = tempfile::tempdir().unwrap();
        let run = Run::new(dir.path(), "ab".repeat(32));
        let a = run.write_jsonl("a.jsonl", "rows", &[], b"{\"x\":1}\n").unwrap();
        let a = run.read(&a, "rows").unwrap();
        assert_eq!(a.body, b"{\"x\":1}\n");
        assert_eq!(a.name, "a.jsonl");

        let b = run.write_json("b.json", "obj", &[&a], serde_json::json!({"y": 2})).unwrap();
        let b = run.read(&b, "obj").unwrap();
        assert_eq!(b.provenance.inputs["a.jsonl"], a.sha256);
        assert_eq!(serde_json::from_slice::<Value>(&b.body).unwrap(), serde_json::json!({"y": 2}));

        let c = run.write_text("c.csv", "table", &[&a, &b], "h\n1\n").unwrap();
        let c = run.read(&c, "table").unwrap();
        assert_eq!(c.body, b"h\n1\n");
        assert_eq!(c.provenance.inputs.len(), 2);
        assert!(run.path("c.csv.meta.json").exists());
    }

    #[test]
    fn wrong_kind_or_foreign_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let run = Run::new(dir.path(), "cd".repeat(32));
        let p = run.write_jsonl("a.jsonl", "rows", &[], b"").unwrap();
        assert!(run.read(&p, "other").is_err());
        let foreign = dir.path().join("f.jsonl");
        std::fs::write(&foreign, "{\"x\":1}\n").unwrap();
        assert!(run.read(&foreign, "rows").is_err());
    }
}
