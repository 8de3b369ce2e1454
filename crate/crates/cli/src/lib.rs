//! Command-line front end: configuration, experiment orchestration, result
//! caching, CSV output and run manifests.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod oracles;
pub mod table;

pub use harvest_sa_core as core;
pub use harvest_sa_core::exec::parallel_map;

use std::path::{Path, PathBuf};

use harvest_sa_core::uq::StudyCase;

use config::{parse_config_str, ExperimentConfig};
use error::{CliError, CliResult};

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub case: Option<StudyCase>,
}

/// Reads `path` (or starts from the defaults) and applies `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            parse_config_str(&text, &p.display().to_string(), overrides.seed)?
        }
        None => parse_config_str("", "<defaults>", overrides.seed)?,
    };
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = overrides.workers {
        cfg.workers = w;
    }
    if let Some(c) = overrides.case {
        cfg.case = c;
    }
    Ok(cfg)
}
