//! Run manifests: every subcommand writes a JSON manifest next to its
//! primary output with the resolved arguments and input/output digests, so a
//! run can be reproduced byte-for-byte from the manifest alone.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use privview_core::digest::fnv64_hex;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub fnv64: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub args: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(subcommand: &'static str, args: serde_json::Value) -> Self {
        Manifest {
            tool: "privview",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            args,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest_file(path)?);
        Ok(())
    }

    /// Writes `<primary>.manifest`.
    pub fn write_next_to(&self, primary: &Path) -> Result<PathBuf> {
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest");
        let path = primary.with_file_name(name);
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, body.as_bytes())
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        fnv64: fnv64_hex(&bytes),
    })
}
