use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct ArtifactEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct ArtifactManifest<'a> {
    command: &'a str,
    seed: Option<u64>,
    config_fingerprint: Option<&'a str>,
    artifacts: Vec<ArtifactEntry>,
}

/// Output directory of one command. Files are recorded in write order.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    written: Vec<ArtifactEntry>,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` at `rel` (forward slashes) under the run directory.
    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> io::Result<PathBuf> {
        let bytes = bytes.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.written.retain(|e| e.path != rel);
        self.written.push(ArtifactEntry {
            path: rel.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    /// Writes `artifacts.json` and returns every written path, itself last.
    pub fn finish(self, command: &str, seed: Option<u64>, fingerprint: Option<&str>) -> io::Result<Vec<PathBuf>> {
        let mut paths: Vec<PathBuf> = self.written.iter().map(|e| self.root.join(&e.path)).collect();
        let manifest =
            ArtifactManifest { command, seed, config_fingerprint: fingerprint, artifacts: self.written };
        let text = serde_json::to_string_pretty(&manifest).expect("artifact manifest serializes") + "\n";
        let path = self.root.join("artifacts.json");
        fs::write(&path, text)?;
        paths.push(path);
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_lists_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("run")).unwrap();
        run.write("a.txt", "one").unwrap();
        run.write("sub/b.txt", "two").unwrap();
        run.write("a.txt", "uno").unwrap();
        let paths = run.finish("test", Some(3), Some("abc")).unwrap();
        assert_eq!(paths.len(), 3);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run/artifacts.json")).unwrap()).unwrap();
        assert_eq!(v["artifacts"].as_array().unwrap().len(), 2);
        assert_eq!(v["artifacts"][1]["path"], "a.txt");
        assert_eq!(v["artifacts"][1]["bytes"], 3);
        assert_eq!(v["config_fingerprint"], "abc");
        assert!(dir.path().join("run/sub/b.txt").exists());
    }
}
