//! Artifact files. Each one embeds the resolved config:
//! JSON documents carry a top-level `config` field, CSV tables start with a
//! `# config: <json>` line, and binary field dumps are prefixed by
//! `b"PWCF" | u64 length | config JSON` before the field payload.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pwlab::grid::{write_fields, VectorField};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

const BINARY_MAGIC: &[u8; 4] = b"PWCF";

pub struct OutDir {
    dir: PathBuf,
    config: Value,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: &Path, config: Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), config, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes through a temporary file in the same directory, then renames.
    fn atomic(&mut self, name: &str, body: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
            body(&mut w)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        self.written.push(target);
        Ok(())
    }

    /// `{ "config": …, <fields of report> }`.
    pub fn json(&mut self, name: &str, report: &impl Serialize) -> Result<(), CliError> {
        let mut doc = serde_json::Map::new();
        doc.insert("config".into(), self.config.clone());
        match serde_json::to_value(report).map_err(|e| CliError::Compute(e.to_string()))? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("report".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("values serialize");
        self.atomic(name, |w| writeln!(w, "{text}"))
    }

    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let header = serde_json::to_string(&self.config).expect("values serialize");
        self.atomic(name, |w| {
            writeln!(w, "# config: {header}")?;
            body(w)
        })
    }

    pub fn fields(&mut self, name: &str, u: &VectorField) -> Result<(), CliError> {
        let header = serde_json::to_vec(&self.config).expect("values serialize");
        self.atomic(name, |w| {
            w.write_all(BINARY_MAGIC)?;
            w.write_all(&(header.len() as u64).to_le_bytes())?;
            w.write_all(&header)?;
            write_fields(w, u)
        })
    }
}

/// Splits a binary artifact into its embedded config and field payload.
pub fn read_binary(bytes: &[u8]) -> Option<(Value, &[u8])> {
    let rest = bytes.strip_prefix(BINARY_MAGIC)?;
    let len = u64::from_le_bytes(rest.get(..8)?.try_into().ok()?) as usize;
    let config = serde_json::from_slice(rest.get(8..8 + len)?).ok()?;
    Some((config, &rest[8 + len..]))
}
