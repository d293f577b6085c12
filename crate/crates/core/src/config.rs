//! Experiment configuration: strict TOML (unknown keys rejected),
//! environment-variable overrides under the `FEDVEIL_` prefix, and full
//! validation before anything runs.
//!
//! Override syntax: `FEDVEIL_<PATH>=<value>` where `<PATH>` is the
//! lower-cased key path with `__` between segments, and `<value>` is
//! parsed as a TOML literal (falling back to a string). Examples:
//! `FEDVEIL_FEDERATION__ROUNDS=10`, `FEDVEIL_BACKEND='"mock"'`,
//! `FEDVEIL_FEDERATION__PARTICIPATION=0.5`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fedsim::FederationConfig;

pub const ENV_PREFIX: &str = "FEDVEIL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad environment override {var}: {reason}")]
    EnvOverride { var: String, reason: String },
}

/// Which group backend executes the encryption layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    /// Exponent-tracking arithmetic backend: same algebra, desk-scale fast.
    Mock,
    /// Pairing group, 256-bit security.
    Bls381,
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Where the experiment's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Big-endian IDX image/label files. Without explicit test files a
    /// seeded `test_fraction` split is carved from the training pair.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        /// Keep only these labels (relabeled densely, in the given order).
        #[serde(default)]
        keep_classes: Option<Vec<u32>>,
        /// Cap samples per class after filtering.
        #[serde(default)]
        max_per_class: Option<usize>,
    },
    /// Seeded synthetic Gaussian-blob classification data.
    Blobs {
        classes: u32,
        samples_per_class: usize,
        #[serde(default = "default_rows")]
        rows: u32,
        #[serde(default = "default_cols")]
        cols: u32,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_rows() -> u32 {
    28
}
fn default_cols() -> u32 {
    28
}
fn default_noise() -> f64 {
    0.15
}

impl DatasetSource {
    pub fn test_fraction(&self) -> f64 {
        match self {
            DatasetSource::Idx { test_fraction, .. }
            | DatasetSource::Blobs { test_fraction, .. } => *test_fraction,
        }
    }
}

/// Output and metric toggles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputToggles {
    /// Write per-round model checkpoints under `checkpoints/`.
    pub checkpoints: bool,
    /// Emit the analysis reports under `reports/` after the run.
    pub reports: bool,
    /// Relative tolerance for the mapping-length indistinguishability
    /// indicator.
    pub mapping_tolerance: f64,
}

impl Default for OutputToggles {
    fn default() -> Self {
        OutputToggles { checkpoints: true, reports: true, mapping_tolerance: 0.01 }
    }
}

fn default_backend() -> BackendChoice {
    BackendChoice::Mock
}

/// Everything one experiment invocation needs. Scalar fields precede the
/// sub-tables so the struct serializes directly to TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_backend")]
    pub backend: BackendChoice,
    /// Also run the full-retrain counterfactual under the same partition.
    #[serde(default)]
    pub baseline: bool,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub federation: FederationConfig,
    #[serde(default)]
    pub output: OutputToggles,
}

impl ExperimentConfig {
    /// Read, apply `FEDVEIL_*` overrides from the process environment,
    /// and validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_env(&text, std::env::vars())
    }

    /// Parse from TOML text with an explicit override set (exposed for
    /// tests; `load` feeds the real environment through here).
    pub fn from_toml_with_env(
        text: &str,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text)?;
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (var, raw) in overrides {
            apply_override(&mut value, &var, &raw)?;
        }
        let config: ExperimentConfig = value.try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.federation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let fraction = self.dataset.test_fraction();
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "test fraction must be in (0,1), got {fraction}"
            )));
        }
        match &self.dataset {
            DatasetSource::Blobs { classes, samples_per_class, rows, cols, .. } => {
                if *classes < 2 {
                    return Err(ConfigError::Invalid(format!(
                        "blob generator needs at least 2 classes, got {classes}"
                    )));
                }
                if *samples_per_class == 0 {
                    return Err(ConfigError::Invalid("samples_per_class must be positive".into()));
                }
                let dim = (*rows as usize) * (*cols as usize);
                let expected = self.federation.architecture.input_dim;
                if dim != expected {
                    return Err(ConfigError::Invalid(format!(
                        "blob pixels ({rows}×{cols} = {dim}) do not match the model input \
                         dimension ({expected})"
                    )));
                }
            }
            DatasetSource::Idx { keep_classes, .. } => {
                if let Some(keep) = keep_classes {
                    if keep.len() < 2 {
                        return Err(ConfigError::Invalid(
                            "keep_classes must retain at least 2 classes".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Set one `FEDVEIL_…` override into the parsed TOML tree.
fn apply_override(root: &mut toml::Value, var: &str, raw: &str) -> Result<(), ConfigError> {
    let path = var[ENV_PREFIX.len()..].to_lowercase();
    let segments: Vec<&str> = path.split("__").collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::EnvOverride {
            var: var.to_string(),
            reason: "empty key segment".to_string(),
        });
    }
    let leaf: toml::Value = match toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("parsed literal"),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    for segment in &segments[..segments.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| ConfigError::EnvOverride {
            var: var.to_string(),
            reason: format!("{segment} is not a table"),
        })?;
        node = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| ConfigError::EnvOverride {
        var: var.to_string(),
        reason: "parent is not a table".to_string(),
    })?;
    table.insert(segments[segments.len() - 1].to_string(), leaf);
    Ok(())
}
