//! Run directory writes. Every file goes through a temporary sibling and a
//! rename, so a crashed run never leaves a half-written artifact.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use spraygate_core::io::{write_atomic, DatasetManifest};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const INPUT_DIGESTS: &str = "inputs.sha256";

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| spraygate_core::Error::Io {
            path: root.to_owned(),
            source: e,
        })?;
        Ok(Self {
            root: root.to_owned(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        Ok(write_atomic(&self.path(rel), bytes)?)
    }

    pub fn write_csv<T: Serialize>(&self, rel: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)
                .map_err(|e| CliError::Internal(format!("{rel}: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Internal(format!("{rel}: {e}")))?;
        self.write(rel, &bytes)
    }

    pub fn write_resolved(&self, cfg: &RunConfig) -> CliResult<()> {
        self.write(RESOLVED_CONFIG, cfg.to_toml()?.as_bytes())
    }

    /// Record the hash of the input manifest and of every file it lists.
    pub fn write_input_digests(&self, manifest_path: &Path, manifest: &DatasetManifest) -> CliResult<()> {
        let mut out = String::new();
        let mut add = |path: &Path, label: &str| -> CliResult<()> {
            let bytes = std::fs::read(path).map_err(|e| spraygate_core::Error::Io {
                path: path.to_owned(),
                source: e,
            })?;
            out.push_str(&format!("{}  {label}\n", hex::encode(Sha256::digest(&bytes))));
            Ok(())
        };
        add(manifest_path, DatasetManifest::FILE_NAME)?;
        for rec in &manifest.frames {
            for p in rec.paths() {
                add(&manifest.root().join(p), &p.to_string_lossy())?;
            }
        }
        self.write(INPUT_DIGESTS, out.as_bytes())
    }
}
