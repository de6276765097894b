//! Run manifests: every command that writes an artifact also records what
//! went in and what came out, keyed by SHA-256 digests, so reruns can be
//! audited. Identical inputs and config imply identical output digests; the
//! wall-clock line is informational and excluded from that guarantee.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use banditkit::Result;
use sha2::{Digest, Sha256};

use crate::util::{atomic_write, read_file};

pub struct RunManifest {
    command: &'static str,
    inputs: Vec<(PathBuf, String)>,
    config: Vec<(String, String)>,
    outputs: Vec<(PathBuf, String)>,
    started: Instant,
}

fn digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in hasher.finalize() {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

impl RunManifest {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            config: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Record an input file by digesting its current contents.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let text = read_file(path)?;
        self.inputs.push((path.to_path_buf(), digest(&text)));
        Ok(())
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    /// Write an output file atomically and record its digest.
    pub fn write_output(&mut self, path: &Path, contents: &str) -> Result<()> {
        atomic_write(path, contents)?;
        self.outputs.push((path.to_path_buf(), digest(contents)));
        Ok(())
    }

    /// Render and write the manifest next to the primary output.
    pub fn finish(self, primary_output: &Path) -> Result<()> {
        let mut out = String::from("# banditkit manifest\n");
        let _ = writeln!(out, "command\t{}", self.command);
        for (path, hex) in &self.inputs {
            let _ = writeln!(out, "input\t{}\tsha256:{hex}", path.display());
        }
        for (key, value) in &self.config {
            let _ = writeln!(out, "config\t{key}={value}");
        }
        for (path, hex) in &self.outputs {
            let _ = writeln!(out, "output\t{}\tsha256:{hex}", path.display());
        }
        let _ = writeln!(out, "wall_clock_ms\t{}", self.started.elapsed().as_millis());
        let mut manifest_path = primary_output.as_os_str().to_owned();
        manifest_path.push(".manifest");
        atomic_write(Path::new(&manifest_path), &out)
    }
}
