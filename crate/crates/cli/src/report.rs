//! Report files. Every file carries the command, config hash, seed and
//! toolkit version; nothing time-dependent is written.

use std::path::{Path, PathBuf};

use lgdkit::{Error, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(command: &str, config_sha256: String, seed: Option<u64>) -> Self {
        Self {
            tool: "lgdkit",
            version: VERSION,
            command: command.to_string(),
            config_sha256,
            seed,
        }
    }

    fn csv_banner(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} {} command={} config_sha256={} seed={}\n",
            self.tool, self.version, self.command, self.config_sha256, seed
        )
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    meta: &'a Meta,
    result: &'a T,
}

pub struct Reporter {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Reporter {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        let envelope = Envelope {
            meta: &self.meta,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&envelope).map_err(|e| Error::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// CSV body produced by `fill`, preceded by a `#` banner line.
    pub fn csv(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = self.meta.csv_banner().into_bytes();
        fill(&mut bytes)?;
        self.write(name, &bytes)
    }
}
