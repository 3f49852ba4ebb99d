use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, InitialState};
use crate::error::{HarnessError, Result};

/// What was run, when, on which inputs, and which files it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// SHA-256 of the canonical config text and any custom initial-state file.
    pub input_hash: String,
    /// Paths relative to the output directory, in write order.
    pub files: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn input_hash(config: &ExperimentConfig) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(config.to_text().as_bytes());
    if let InitialState::Custom(path) = &config.initial {
        let bytes = fs::read(path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Collects output files under one directory.
pub struct OutputDir<'a> {
    root: &'a Path,
    files: Vec<String>,
}

impl<'a> OutputDir<'a> {
    pub fn create(root: &'a Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| HarnessError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, relative: &str, contents: &str) -> Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, contents).map_err(|source| HarnessError::Io { path, source })?;
        self.files.push(relative.to_string());
        Ok(())
    }

    pub fn into_files(self) -> Vec<String> {
        self.files
    }
}
