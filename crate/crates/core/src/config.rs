//! Run configuration: a single JSON document describing an experiment.
//!
//! Unknown keys are hard errors — a silently ignored typo in a sweep config
//! corrupts the whole experiment. All policy and harness defaults are
//! overridable.

use crate::backend::{BackendSpec, ErrorCorrelation};
use crate::harness::{GeneratorSpec, RoutingArm};
use crate::policy::PolicyHyperparams;
use crate::program::GenericFunction;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FMP_OUTPUT_ROOT";

/// Baselines that can be enabled next to the learned policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Cheapest,
    MostExpensive,
    ParetoRandom,
    Routing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Path to the `.fmp` program, relative to the config file.
    pub program: PathBuf,
    pub functions: Vec<GenericFunction>,
    pub backends: Vec<BackendSpec>,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub error_correlation: ErrorCorrelation,
    #[serde(default)]
    pub positive_output: Option<serde_json::Value>,
    #[serde(default)]
    pub policy: PolicyHyperparams,
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
    /// Monolithic arms for the routing baseline; required when `baselines`
    /// includes `routing`.
    #[serde(default)]
    pub routing: Option<Vec<RoutingArm>>,
    /// Mixture weights swept by the pareto-random baseline.
    #[serde(default = "default_pareto_random_q")]
    pub pareto_random_q: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    /// Output directory; defaults to `$FMP_OUTPUT_ROOT/<config stem>` or
    /// `runs/<config stem>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0]
}

fn default_pareto_random_q() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let program_path = base.join(&config.program);
        let program_source =
            std::fs::read_to_string(&program_path).map_err(|source| ConfigError::Io {
                path: program_path.clone(),
                source,
            })?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        let output_dir = config.output_dir.clone().unwrap_or_else(|| {
            let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| "runs".to_string());
            Path::new(&root).join(&stem)
        });
        let output_dir = if output_dir.is_relative() {
            base.join(output_dir)
        } else {
            output_dir
        };
        Ok(LoadedConfig {
            config,
            program_source,
            output_dir,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must be nonempty".to_string()));
        }
        if self.lambda_grid.is_empty() {
            return Err(ConfigError::Invalid(
                "lambda_grid must be nonempty".to_string(),
            ));
        }
        if self.lambda_grid.iter().any(|l| !(*l > 0.0)) {
            return Err(ConfigError::Invalid(
                "every lambda must be positive".to_string(),
            ));
        }
        if self
            .pareto_random_q
            .iter()
            .any(|q| !(0.0..=1.0).contains(q))
        {
            return Err(ConfigError::Invalid(
                "pareto_random_q entries must lie in [0, 1]".to_string(),
            ));
        }
        if self.baselines.contains(&BaselineKind::Routing) {
            match &self.routing {
                Some(arms) if arms.len() >= 2 => {}
                Some(_) => {
                    return Err(ConfigError::Invalid(
                        "routing baseline needs at least 2 arms".to_string(),
                    ))
                }
                None => {
                    return Err(ConfigError::Invalid(
                        "routing baseline requires a `routing` arms list".to_string(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON form with all defaults made explicit.
    pub fn normalized_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialization cannot fail")
    }
}

/// A config resolved against the filesystem.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub program_source: String,
    pub output_dir: PathBuf,
}

impl LoadedConfig {
    /// Environment spec for one (lambda, seed) cell of the sweep.
    pub fn environment_spec(&self, lambda: f64, seed: u64) -> crate::harness::EnvironmentSpec {
        crate::harness::EnvironmentSpec {
            program: self.program_source.clone(),
            functions: self.config.functions.clone(),
            backends: self.config.backends.clone(),
            generator: self.config.generator.clone(),
            lambda,
            horizon: self.config.horizon,
            seed,
            error_correlation: self.config.error_correlation,
            positive_output: self.config.positive_output.clone(),
        }
    }
}
