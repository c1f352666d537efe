//! `key = value` run manifests and their content hash.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const HASH_KEY: &str = "manifest_sha256";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace(['\n', '\r'], " ");
        self.entries.insert(key.to_string(), v);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn body(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of every line except the hash line itself.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }

    pub fn render(&self) -> String {
        format!("{}{HASH_KEY} = {}\n", self.body(), self.hash())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(|e| CliError::io(path, e))
    }

    pub fn parse(text: &str) -> Option<Manifest> {
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(" = ")?;
            if k != HASH_KEY {
                m.entries.insert(k.to_string(), v.to_string());
            }
        }
        Some(m)
    }
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
