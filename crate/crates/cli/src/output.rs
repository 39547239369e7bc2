use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

/// Collects what a command read and wrote, then records it next to the outputs.
pub struct Manifest {
    command: &'static str,
    seed: u64,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    timings: Vec<(String, f64)>,
    out_dir: PathBuf,
    started: Instant,
    last: Instant,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a Value,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
    /// Wall-clock milliseconds per phase; the only non-reproducible field.
    timings_ms: BTreeMap<&'a str, f64>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, out_dir: &Path, config: Value) -> Self {
        let now = Instant::now();
        Self {
            command,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            started: now,
            last: now,
        }
    }

    pub fn input(&mut self, name: &str, path: impl AsRef<str>) {
        self.inputs.insert(name.into(), path.as_ref().into());
    }

    /// Records the time since the previous phase ended.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push((name.into(), (now - self.last).as_secs_f64() * 1e3));
        self.last = now;
    }

    /// Writes `bytes` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(name.into());
        Ok(path)
    }

    pub fn finish(mut self) -> CliResult<()> {
        let total = self.started.elapsed().as_secs_f64() * 1e3;
        self.timings.push(("total".into(), total));
        let file = ManifestFile {
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.seed,
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            timings_ms: self.timings.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
        };
        write_atomic(&self.out_dir.join("manifest.json"), to_json_pretty(&file).as_bytes())
    }
}
