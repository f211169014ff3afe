use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Command-line flags; every flag can also come from a `GESTEVAL_*` variable.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "gesteval-serve", about = "Pairwise human-evaluation service")]
pub struct Args {
    /// TOML file with defaults for the options below.
    #[arg(long, env = "GESTEVAL_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "GESTEVAL_LISTEN")]
    pub listen: Option<SocketAddr>,
    #[arg(long, env = "GESTEVAL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Registry JSON used when a study definition omits its registry.
    #[arg(long, env = "GESTEVAL_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[arg(long, env = "GESTEVAL_SESSION_LENGTH")]
    pub session_length: Option<u32>,
    #[arg(long, env = "GESTEVAL_SEED")]
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen: Option<SocketAddr>,
    data_dir: Option<PathBuf>,
    registry: Option<PathBuf>,
    session_length: Option<u32>,
    rng_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub registry: Option<PathBuf>,
    /// Session length for study definitions that do not set one.
    pub session_length: u32,
    /// Default seed for plans and bootstrap reports.
    pub rng_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("gesteval-data"),
            registry: None,
            session_length: 25,
            rng_seed: 0,
        }
    }
}

impl ServiceConfig {
    /// Defaults, then the TOML file, then environment and flags.
    pub fn resolve(args: &Args) -> Result<Self, ConfigError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                toml::from_str::<FileConfig>(&text).map_err(|source| ConfigError::Toml {
                    path: path.clone(),
                    source,
                })?
            }
            None => FileConfig::default(),
        };
        let d = ServiceConfig::default();
        let cfg = ServiceConfig {
            listen: args.listen.or(file.listen).unwrap_or(d.listen),
            data_dir: args.data_dir.clone().or(file.data_dir).unwrap_or(d.data_dir),
            registry: args.registry.clone().or(file.registry),
            session_length: args.session_length.or(file.session_length).unwrap_or(d.session_length),
            rng_seed: args.rng_seed.or(file.rng_seed).unwrap_or(d.rng_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need the file system: the data directory must be writable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.session_length < 5 {
            return Err(invalid("session_length", format!("must be at least 5, got {}", self.session_length)));
        }
        if let Some(r) = &self.registry {
            if !r.is_file() {
                return Err(invalid("registry", format!("{} is not a file", r.display())));
            }
        }
        check_writable(&self.data_dir)
    }
}

fn check_writable(dir: &Path) -> Result<(), ConfigError> {
    std::fs::create_dir_all(dir).map_err(|e| invalid("data_dir", format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"ok")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| invalid("data_dir", format!("{} is not writable: {e}", dir.display())))
}
