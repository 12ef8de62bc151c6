//! Staged output files and the run manifest.
//!
//! Commands compute everything in memory first and only then commit, one
//! temp-file-plus-rename per output, so a failed run leaves no reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abxlab::digest::sha256_hex;
use serde_json::{json, Map, Value};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    pub fn commit(self, out: &Path) -> Result<(), CliError> {
        for (rel, bytes) in self.files {
            let dest = out.join(&rel);
            let dir = dest.parent().unwrap_or(out);
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let name = dest.file_name().and_then(|n| n.to_str()).unwrap_or("out");
            let tmp = dir.join(format!(".{name}.{}.partial", std::process::id()));
            fs::write(&tmp, &bytes).map_err(|e| io_err(&tmp, e))?;
            fs::rename(&tmp, &dest).map_err(|e| io_err(&dest, e))?;
        }
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Content digests of an input file, or of every file below a directory.
pub fn digest_inputs(paths: &[(&str, &Path)]) -> Result<Value, CliError> {
    let mut out = Map::new();
    for (role, path) in paths {
        let mut files = Vec::new();
        collect_files(path, &mut files).map_err(|e| CliError::Core(abxlab::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }))?;
        files.sort();
        let mut entries = Map::new();
        for f in files {
            let bytes = fs::read(&f).map_err(|e| CliError::Core(abxlab::Error::Io {
                path: f.clone(),
                source: e,
            }))?;
            entries.insert(f.display().to_string(), Value::String(sha256_hex(&bytes)));
        }
        out.insert(role.to_string(), Value::Object(entries));
    }
    Ok(Value::Object(out))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            collect_files(&entry?.path(), out)?;
        }
    } else {
        fs::metadata(path)?;
        out.push(path.to_path_buf());
    }
    Ok(())
}

pub struct Manifest {
    pub command: String,
    pub config: Value,
    pub inputs: Value,
    pub seed: Option<u64>,
    pub started: Instant,
}

impl Manifest {
    pub fn render(&self) -> Vec<u8> {
        let v = json!({
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "config": self.config,
            "inputs": self.inputs,
            "tool_version": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
            "seed": self.seed,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        });
        let mut s = serde_json::to_string_pretty(&v).expect("json");
        s.push('\n');
        s.into_bytes()
    }
}
