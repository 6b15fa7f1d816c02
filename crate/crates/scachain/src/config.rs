//! Pipeline configuration: one TOML file with per-stage sections. Flags on
//! the CLI override individual keys after loading. The config round-trips
//! through TOML losslessly.

use crate::chains::ScopeMode;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecInput {
    pub spec_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub chains: PathBuf,
    pub reports_dir: PathBuf,
    pub tests_dir: PathBuf,
    pub cache: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: "out/corpus.jsonl".into(),
            nodes: "out/nodes.jsonl".into(),
            edges: "out/edges.jsonl".into(),
            chains: "out/chains.jsonl".into(),
            reports_dir: "out/reports".into(),
            tests_dir: "out/tests".into(),
            cache: "out/cache.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    /// "pattern" (deterministic, offline) or "service".
    pub backend: String,
    pub examples_per_spec: u32,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            backend: "pattern".to_string(),
            examples_per_spec: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub max_concurrency: usize,
    pub retry_attempts: u32,
    pub backoff_ms: u64,
    pub max_response_chars: usize,
    /// Endpoint URL; falls back to MODEL_ENDPOINT_URL when unset.
    pub endpoint: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            retry_attempts: 3,
            backoff_ms: 1000,
            max_response_chars: 4000,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainsConfig {
    pub mode: ScopeMode,
    pub semantic_threshold: f64,
    /// Truncate the clause-local grouping key to this dotted depth; 0 = leaf.
    pub clause_local_depth: u32,
    /// Per-pair judge cost used by the serial-cost estimate in stats.
    pub seconds_per_pair: f64,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        Self {
            mode: ScopeMode::ReferenceGuided,
            semantic_threshold: 0.85,
            clause_local_depth: 0,
            seconds_per_pair: 5.46,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// "rules" (deterministic) or "service".
    pub judge: String,
    pub rules_file: Option<PathBuf>,
    pub properties_file: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            judge: "rules".to_string(),
            rules_file: None,
            properties_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// "exact_canonical" or "similarity".
    pub accuracy_mode: String,
    pub accuracy_threshold: f64,
    /// Optional gold node store for field-accuracy and ROUGE reporting.
    pub gold: Option<PathBuf>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            accuracy_mode: "similarity".to_string(),
            accuracy_threshold: 0.8,
            gold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub inputs: Vec<SpecInput>,
    pub paths: PathsConfig,
    pub extractor: ExtractorConfig,
    pub backend: BackendConfig,
    pub chains: ChainsConfig,
    pub oracle: OracleConfig,
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let data = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Self = toml::from_str(&data).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        crate::backends::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            message,
        };
        if !matches!(self.extractor.backend.as_str(), "pattern" | "service") {
            return Err(invalid(
                "extractor.backend",
                format!("expected \"pattern\" or \"service\", got {:?}", self.extractor.backend),
            ));
        }
        if !matches!(self.oracle.judge.as_str(), "rules" | "service") {
            return Err(invalid(
                "oracle.judge",
                format!("expected \"rules\" or \"service\", got {:?}", self.oracle.judge),
            ));
        }
        if !(self.chains.semantic_threshold > 0.0 && self.chains.semantic_threshold <= 1.0) {
            return Err(invalid(
                "chains.semantic_threshold",
                format!("must lie in (0, 1], got {}", self.chains.semantic_threshold),
            ));
        }
        if !matches!(self.metrics.accuracy_mode.as_str(), "exact_canonical" | "similarity") {
            return Err(invalid(
                "metrics.accuracy_mode",
                format!(
                    "expected \"exact_canonical\" or \"similarity\", got {:?}",
                    self.metrics.accuracy_mode
                ),
            ));
        }
        if !(self.metrics.accuracy_threshold > 0.0 && self.metrics.accuracy_threshold <= 1.0) {
            return Err(invalid(
                "metrics.accuracy_threshold",
                format!("must lie in (0, 1], got {}", self.metrics.accuracy_threshold),
            ));
        }
        if self.backend.retry_attempts == 0 {
            return Err(invalid("backend.retry_attempts", "must be at least 1".to_string()));
        }
        for (i, input) in self.inputs.iter().enumerate() {
            if input.spec_id.trim().is_empty() {
                return Err(invalid(
                    &format!("inputs[{i}].spec_id"),
                    "must not be empty".to_string(),
                ));
            }
        }
        Ok(())
    }
}
