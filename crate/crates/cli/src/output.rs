use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Maps any library error to a run failure.
pub fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

/// Named output file held in memory until the run has finished.
pub struct OutFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutFile {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Result<Self, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(run_err)?;
        bytes.push(b'\n');
        Ok(Self { name: name.into(), bytes })
    }

    pub fn csv<T: Serialize>(name: &str, rows: &[T]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(run_err)?;
        }
        let bytes = w.into_inner().map_err(run_err)?;
        Ok(Self { name: name.into(), bytes })
    }
}

/// Writes every file through a temporary name in the target directory and
/// renames it into place.
pub fn write_all(dir: &Path, files: &[OutFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&f.bytes)?;
        tmp.persist(dir.join(&f.name)).map_err(|e| CliError::Io(e.error))?;
    }
    Ok(())
}
