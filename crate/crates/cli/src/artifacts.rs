//! Output tracking, input digests and the per-run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tagtriplet::{Error, Result};

use crate::config::Config;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_str(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Collects everything a subcommand writes so failed runs leave no partial
/// artifacts behind, and records the inputs for the run manifest.
pub struct RunContext {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
    inputs: Vec<(PathBuf, String)>,
}

impl RunContext {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(RunContext {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Registers a file some library routine already wrote.
    pub fn track(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn write_manifest(&mut self, command: &str, config: &Config, seed: u64) -> Result<()> {
        let mut out = String::from("tagtriplet-manifest 1\n");
        let _ = writeln!(out, "command\t{command}");
        let _ = writeln!(out, "seed\t{seed}");
        for (key, value) in config.entries() {
            let _ = writeln!(out, "config\t{key}\t{value}");
        }
        for (path, digest) in &self.inputs {
            let _ = writeln!(out, "input\t{}\t{digest}", path.display());
        }
        self.write("run-manifest.tsv", &out)?;
        Ok(())
    }

    /// Removes everything written so far; used when the command fails.
    pub fn discard(&mut self) {
        for path in self.written.drain(..) {
            let _ = fs::remove_file(path);
        }
    }
}
