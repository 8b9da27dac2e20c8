use std::path::{Path, PathBuf};

use carnot_core::probe::GridSpec;
use carnot_core::{DistanceBackend, GroupSpec, OracleOptions, ShootingOptions};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "CARNOT_KIT_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Exact,
    Shooting,
    Oracle,
}

/// Settings file contents. Every field is optional; command-line flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: Option<u32>,
    pub group: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub backend: Option<DistanceBackend>,
    pub ladder: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != 1 {
                return Err(CliError::Config(format!("unsupported schema_version {v}")));
            }
        }
        Ok(cfg)
    }

    /// Thread count: flag, then config file, then the environment.
    pub fn threads(&self, flag: Option<usize>) -> CliResult<Option<usize>> {
        if let Some(n) = flag.or(self.threads) {
            return Ok(Some(n));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v} is not a thread count"))),
            Err(_) => Ok(None),
        }
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn format(&self, flag: Option<Format>) -> Format {
        flag.or(self.format).unwrap_or_default()
    }

    pub fn output(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.output.clone())
    }

    pub fn group(&self, flag: Option<&str>) -> CliResult<GroupSpec> {
        resolve_group(flag.or(self.group.as_deref()).unwrap_or("heisenberg"))
    }

    /// A backend kind given on the command line is built from defaults and the
    /// seed; otherwise the configured backend, otherwise exact on Heisenberg
    /// and shooting elsewhere.
    pub fn backend(&self, flag: Option<BackendKind>, spec: &GroupSpec, seed: u64) -> CliResult<DistanceBackend> {
        let backend = match flag {
            Some(kind) => build_backend(kind, seed),
            None => match &self.backend {
                Some(b) => b.clone(),
                None if carnot_core::geodesic::is_heisenberg(spec) => DistanceBackend::Exact,
                None => build_backend(BackendKind::Shooting, seed),
            },
        };
        backend.supports(spec)?;
        Ok(backend)
    }

    pub fn ladder(&self, flag: Option<Vec<f64>>) -> Vec<f64> {
        flag.or_else(|| self.ladder.clone())
            .unwrap_or_else(|| carnot_core::probe::DEFAULT_LADDER.to_vec())
    }
}

pub fn build_backend(kind: BackendKind, seed: u64) -> DistanceBackend {
    match kind {
        BackendKind::Exact => DistanceBackend::Exact,
        BackendKind::Shooting => DistanceBackend::Shooting(ShootingOptions {
            sequence_offset: seed,
            ..Default::default()
        }),
        BackendKind::Oracle => DistanceBackend::Oracle(OracleOptions {
            seed,
            ..Default::default()
        }),
    }
}

/// A builtin group name, or a path to a JSON group description.
pub fn resolve_group(name: &str) -> CliResult<GroupSpec> {
    if let Ok(g) = GroupSpec::builtin(name) {
        return Ok(g);
    }
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Ok(GroupSpec::from_json(&text)?);
    }
    Err(CliError::Config(format!(
        "unknown group '{name}' (builtins: {})",
        carnot_core::group::BUILTIN_GROUPS.join(", ")
    )))
}
