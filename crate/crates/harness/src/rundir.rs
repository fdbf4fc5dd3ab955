//! Timestamped run directories with a JSON manifest (`run.json`).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::store::to_canonical_json;

pub const RUN_MANIFEST_VERSION: u32 = 1;
pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    ValidationFailed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    /// Merged configuration file written next to the manifest.
    pub config: String,
}

pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

fn now() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

impl RunDir {
    /// Creates `<root>/<command>-<UTC timestamp>[-N]`; never reuses a path.
    pub fn create(root: &Path, command: &str, args: Vec<String>, seed: u64, config_toml: &str) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let base = format!("{command}-{stamp}");
        let mut n = 0;
        let path = loop {
            let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
            let p = root.join(name);
            match fs::create_dir(&p) {
                Ok(()) => break p,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(e),
            }
        };
        fs::write(path.join("config.toml"), config_toml)?;
        let manifest = RunManifest {
            format_version: RUN_MANIFEST_VERSION,
            command: command.into(),
            args,
            seed,
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            exit_code: None,
            artifacts: vec!["config.toml".into()],
            config: "config.toml".into(),
        };
        let run = Self { path, manifest };
        run.save()?;
        Ok(run)
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn record(&mut self, rel: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == rel) {
            self.manifest.artifacts.push(rel.into());
        }
    }

    /// Writes `contents` to `rel` and records it.
    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> io::Result<PathBuf> {
        let p = self.file(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents)?;
        self.record(rel);
        Ok(p)
    }

    pub fn save(&self) -> io::Result<()> {
        fs::write(self.path.join(RUN_MANIFEST), to_canonical_json(&self.manifest))
    }

    pub fn finish(mut self, status: RunStatus, exit_code: i32) -> io::Result<PathBuf> {
        self.manifest.finished_at = Some(now());
        self.manifest.status = status;
        self.manifest.exit_code = Some(exit_code);
        self.save()?;
        Ok(self.path)
    }
}
