//! Versioned JSON reports, CSV side files and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::RunConfig;
use crate::CliError;

/// Bumped whenever a report key changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const LOCK_FILE: &str = ".refertriage.lock";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    generated_at: String,
    seed: u64,
    config: &'a RunConfig,
    result: &'a T,
}

/// Holds the output directory for one run; the lock file is removed on drop.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn acquire(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let lock = root.join(LOCK_FILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    CliError::Locked(lock.clone())
                } else {
                    CliError::io(&lock, e)
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(OutputDir {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_report<T: Serialize>(
        &self,
        name: &str,
        command: &str,
        config: &RunConfig,
        result: &T,
    ) -> Result<PathBuf, CliError> {
        let envelope = Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            generated_at: OffsetDateTime::now_utc()
                .format(&Rfc3339)
                .unwrap_or_default(),
            seed: config.seed,
            config,
            result,
        };
        let mut text =
            serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Data(e.into()))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
