use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Files and directories written by a command. Unless [`commit`] is
/// called, everything registered is removed on drop, so a failed command
/// leaves no partial outputs behind.
///
/// [`commit`]: Outputs::commit
#[derive(Debug, Default)]
pub struct Outputs {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `path` for cleanup and returns it.
    pub fn file(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.paths.push(path.clone());
        path
    }

    /// Creates `dir` if needed. A directory created here is removed whole
    /// on failure.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.paths.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<()> {
        let path = self.file(path);
        let mut w = BufWriter::new(
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.paths.iter().rev() {
            let _ = if p.is_dir() {
                fs::remove_dir_all(p)
            } else {
                fs::remove_file(p)
            };
        }
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub options: &'a T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputRecord {
    pub fn new(role: &str, path: &Path) -> Result<Self> {
        Ok(InputRecord {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: fingerprint(path)?,
        })
    }
}

pub fn run_manifest<'a, T: Serialize>(
    command: &'a str,
    options: &'a T,
    inputs: Vec<InputRecord>,
) -> RunManifest<'a, T> {
    RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        options,
        inputs,
        summary: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        {
            let mut out = Outputs::new();
            out.dir(&dir).unwrap();
            out.write_json(dir.join("a.json"), &1).unwrap();
        }
        assert!(!dir.exists());
        let mut out = Outputs::new();
        out.dir(&dir).unwrap();
        out.write_json(dir.join("a.json"), &1).unwrap();
        out.commit();
        assert!(dir.join("a.json").exists());
    }

    #[test]
    fn fingerprint_is_sha256() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            fingerprint(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
