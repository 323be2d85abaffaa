//! Run configuration: a TOML file with sections, overridden by command-line
//! flags, plus the provenance hashing embedded in every report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vlat_core::report::ReportMeta;
use vlat_core::BackendConfig;

use crate::CliError;

/// The config file contents; every field optional so flags can fill gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub template: TemplateSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub annotate: AnnotateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub temporal: TemporalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSection {
    pub path: Option<PathBuf>,
    pub builtin: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub structured_output: Option<bool>,
    pub max_retries: Option<u32>,
    pub request_timeout_secs: Option<u64>,
    pub rate_limit_per_min: Option<f64>,
    pub api_key_env: Option<String>,
    pub backoff_ms: Option<u64>,
    pub fixture: Option<PathBuf>,
    pub mock_rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    pub batch_size: Option<usize>,
    pub token_budget: Option<u64>,
    pub parallelism: Option<usize>,
    pub price_per_1000: Option<f64>,
    pub limit: Option<usize>,
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalSection {
    pub threshold: Option<String>,
    pub bin_width: Option<String>,
    pub weighted: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Backend settings after merging file and flags, ready to build a client.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedBackend {
    pub kind: String,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub structured_output: bool,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    pub rate_limit_per_min: f64,
    pub api_key_env: String,
    pub backoff_ms: u64,
    pub fixture: Option<PathBuf>,
    pub mock_rules: Option<PathBuf>,
}

impl ResolvedBackend {
    pub fn from(section: &BackendSection, kind_flag: Option<&str>) -> ResolvedBackend {
        let defaults = BackendConfig::default();
        ResolvedBackend {
            kind: kind_flag
                .map(str::to_string)
                .or_else(|| section.kind.clone())
                .unwrap_or_else(|| "mock".into()),
            endpoint: section.endpoint.clone().unwrap_or(defaults.endpoint),
            model: section.model.clone().unwrap_or(defaults.model_name),
            temperature: section.temperature.unwrap_or(defaults.temperature),
            structured_output: section
                .structured_output
                .unwrap_or(defaults.structured_output),
            max_retries: section.max_retries.unwrap_or(defaults.max_retries),
            request_timeout_secs: section
                .request_timeout_secs
                .unwrap_or(defaults.request_timeout.as_secs()),
            rate_limit_per_min: section
                .rate_limit_per_min
                .unwrap_or(defaults.rate_limit_per_min),
            api_key_env: section.api_key_env.clone().unwrap_or(defaults.api_key_env),
            backoff_ms: section
                .backoff_ms
                .unwrap_or(defaults.backoff_base.as_millis() as u64),
            fixture: section.fixture.clone(),
            mock_rules: section.mock_rules.clone(),
        }
    }

    pub fn to_backend_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.endpoint.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            structured_output: self.structured_output,
            max_retries: self.max_retries,
            request_timeout: Duration::from_secs(self.request_timeout_secs),
            rate_limit_per_min: self.rate_limit_per_min,
            api_key_env: self.api_key_env.clone(),
            backoff_base: Duration::from_millis(self.backoff_ms),
        }
    }
}

/// Short content hash of any serializable settings value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).expect("settings serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn report_meta<T: Serialize>(
    settings: &T,
    seed: u64,
    inputs: &[&Path],
) -> Result<ReportMeta, CliError> {
    let mut input_digests = BTreeMap::new();
    for path in inputs {
        input_digests.insert(path.display().to_string(), file_digest(path)?);
    }
    Ok(ReportMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(settings),
        seed,
        input_digests,
    })
}
