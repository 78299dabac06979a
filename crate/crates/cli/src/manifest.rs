//! Buffered run outputs and the `manifest.json` that indexes them.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Files produced by one command, held in memory until the command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Collects the output of a writer-based serializer.
    pub fn with_writer<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> llns_core::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::Output(format!("{name}: {e}")))?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub argv: &'a [String],
    pub seed: Option<u64>,
    pub config: &'a RunConfig,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every buffered file into `dir`, then the manifest.
pub fn write_all(
    dir: &Path,
    outputs: &Outputs,
    command: &str,
    argv: &[String],
    config: &RunConfig,
    elapsed: Duration,
) -> Result<Vec<FileEntry>, CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Output(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let mut files = Vec::with_capacity(outputs.files.len());
    for (name, bytes) in &outputs.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(e, &path))?;
        files.push(FileEntry {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        command,
        version: llns_core::VERSION,
        argv,
        seed: config.run.seed,
        config,
        wall_time_s: elapsed.as_secs_f64(),
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    bytes.push(b'\n');
    let path = dir.join(MANIFEST);
    std::fs::write(&path, bytes).map_err(|e| io(e, &path))?;
    Ok(manifest.files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add("a.csv", b"x,y\n1,2\n".to_vec());
        out.json("b.json", &[1.5, 2.0]).unwrap();
        let files = write_all(dir.path(), &out, "test", &[], &RunConfig::default(), Duration::ZERO).unwrap();
        assert_eq!(files.len(), 2);
        let m: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        for f in m["files"].as_array().unwrap() {
            let bytes = std::fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
            assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        }
    }
}
