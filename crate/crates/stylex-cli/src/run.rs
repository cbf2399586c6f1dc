//! Run-directory plumbing: lock file, config snapshot, schema id.

use std::path::{Path, PathBuf};

use serde::Serialize;
use stylex_core::TrainError;

use crate::config::{ExperimentConfig, CONFIG_SCHEMA};

/// CLI failure classes; each maps to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: bad invocation or configuration.
    Usage(String),
    /// Exit 2: missing or corrupt data.
    Data(String),
    /// Exit 3: numeric abort (non-finite loss).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Held for the duration of one command; two commands must not share an
/// output directory concurrently.
pub struct OutDirLock {
    path: PathBuf,
}

impl OutDirLock {
    pub fn acquire(out_root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_root)?;
        let path = out_root.join(".stylex.lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(
                format!(
                    "output directory {} is locked by another command (remove {} if stale)",
                    out_root.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Serialize)]
struct RunStamp<'a> {
    schema: u32,
    command: &'a str,
    seed_override: Option<u64>,
}

/// Create the command's own directory and drop a config snapshot plus a
/// schema-stamped run descriptor into it.
pub fn stamp_run_dir(
    dir: &Path,
    config: &ExperimentConfig,
    command: &str,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let snapshot = toml::to_string_pretty(config)
        .map_err(|e| CliError::Data(format!("config serialization: {e}")))?;
    std::fs::write(dir.join("config_snapshot.toml"), snapshot)?;
    let stamp = RunStamp {
        schema: CONFIG_SCHEMA,
        command,
        seed_override,
    };
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&stamp).expect("static fields"),
    )?;
    Ok(())
}

/// Load the experiment config, or defaults when no file is given.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
        }
    }
}
