//! File helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use banditkit::{Error, Result};

/// Read a file, tagging IO problems with the path.
pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))
}

/// Write a file atomically: write to a temp sibling, then rename over the
/// destination.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let mut tmp = PathBuf::from(dir.unwrap_or(Path::new(".")));
    tmp.push(format!(".{}.tmp{}", file_name.to_string_lossy(), process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Default worker count for the learning-rate sweep: the BANDITKIT_THREADS
/// environment variable when set, otherwise the machine's parallelism.
pub fn thread_count() -> usize {
    if let Ok(raw) = std::env::var("BANDITKIT_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
