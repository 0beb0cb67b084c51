//! Run manifests: what ran, with which resolved configuration, and a SHA-256
//! digest of every file written.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub master_seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files for one run and writes them plus the manifest.
#[derive(Debug)]
pub struct OutputDir<'a> {
    dir: &'a Path,
    outputs: Vec<OutputDigest>,
}

impl<'a> OutputDir<'a> {
    pub fn create(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir,
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputDigest {
            file: name.to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    pub fn finish(self, subcommand: &str, master_seed: Option<u64>, config: serde_json::Value) -> Result<()> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
