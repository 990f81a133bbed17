//! Run-directory handling: overwrite protection and the environment record
//! that makes a run reproducible from its artifacts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Creates the run directory, refusing to reuse a non-empty one unless
/// `force` is set.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "{} exists and is not a directory",
                dir.display()
            )));
        }
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::config(format!(
                "run directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Reproducibility record saved next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub crate_version: String,
    pub train_seed: u64,
    pub sampling_seed: u64,
    pub init_seed: u64,
    pub workers: usize,
    pub f64_radix: u32,
    pub f64_mantissa_digits: u32,
    pub endianness: String,
}

impl EnvironmentRecord {
    pub fn new(train_seed: u64, sampling_seed: u64, init_seed: u64, workers: usize) -> Self {
        EnvironmentRecord {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            train_seed,
            sampling_seed,
            init_seed,
            workers,
            f64_radix: f64::RADIX,
            f64_mantissa_digits: f64::MANTISSA_DIGITS,
            endianness: if cfg!(target_endian = "little") {
                "little".to_string()
            } else {
                "big".to_string()
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, format!("{}\n", serde_json::to_string_pretty(self)?))?;
        Ok(())
    }
}
