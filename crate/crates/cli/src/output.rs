//! Output directory handling. Every file is written atomically.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    /// Creates the directory and echoes the effective configuration into it.
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.run.out.clone();
        std::fs::create_dir_all(&root)?;
        let out = OutDir { root };
        out.write("config.toml", cfg.to_toml())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, text: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        quadrbm::io::write_atomic(&path, text.as_ref())?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write(name, text + "\n")
    }
}

/// Renders rows as CSV with a header. Fields never contain commas.
pub fn csv<R: AsRef<[String]>>(header: &[&str], rows: impl IntoIterator<Item = R>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.as_ref().join(","));
        out.push('\n');
    }
    out
}
