//! Artifact writing with a `.provenance` sidecar next to every output file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rough_contact::dataset::{fnv1a, Timing};

/// What produced an artifact: enough to rerun the command and regenerate it.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub timing: Timing,
    /// Extra `key = value` lines, e.g. an effective configuration.
    pub extra: Vec<(String, String)>,
    /// Input files and their content hashes.
    pub inputs: Vec<(PathBuf, u64)>,
}

impl Provenance {
    pub fn new(command: &str, timing: Timing) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed: None,
            timing,
            extra: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    /// Record an input file by hash.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push((path.to_path_buf(), fnv1a(bytes)));
    }

    fn render(&self, artifact: &[u8]) -> String {
        let mut s = String::from("# rough-contact provenance v1\n");
        s.push_str(&format!("tool = {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("command = {}\n", self.command));
        s.push_str(&format!("args = {}\n", self.args.join(" ")));
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push_str(&format!("timing = {}\n", self.timing));
        if self.timing == Timing::Wall {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            s.push_str(&format!("created_unix_s = {now}\n"));
        }
        for (path, hash) in &self.inputs {
            s.push_str(&format!("input = {} fnv1a:{hash:016x}\n", path.display()));
        }
        s.push_str(&format!("artifact_fnv1a = {:016x}\n", fnv1a(artifact)));
        for (k, v) in &self.extra {
            if v.contains('\n') {
                // Multi-line `key = value` blocks are namespaced under `k`.
                for line in v.lines().filter(|l| !l.trim().is_empty()) {
                    s.push_str(&format!("{k}.{}\n", line.trim()));
                }
            } else {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// Write `bytes` to `path` and the sidecar to `path.provenance`.
    pub fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let side = sidecar(path);
        fs::write(&side, self.render(bytes)).with_context(|| format!("writing {}", side.display()))?;
        Ok(())
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".provenance");
    PathBuf::from(name)
}

/// Read a file and record it as an input.
pub fn read_input(prov: &mut Provenance, path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    prov.input(path, &bytes);
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("out/db.csv")), PathBuf::from("out/db.csv.provenance"));
    }

    #[test]
    fn timestamp_only_with_wall_timing() {
        let p = Provenance::new("x", Timing::Off).with("config", "a = 1\nb = 2");
        let text = p.render(b"data");
        assert!(!text.contains("created_unix_s"));
        assert!(text.contains("config.a = 1\nconfig.b = 2\n"));
        assert!(Provenance::new("x", Timing::Wall).render(b"").contains("created_unix_s"));
    }
}
