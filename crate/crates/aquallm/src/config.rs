//! Pipeline configuration, read from a single JSON document.

use std::path::PathBuf;

use aquallm_core::{FilterConfig, InjectionConfig, ParaphraseConfig};
use serde::{Deserialize, Serialize};

use crate::gateway::GatewayConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gateway: GatewayConfig,
    pub filter: FilterConfig,
    pub injection: InjectionConfig,
    pub paraphrase: ParaphraseConfig,
    pub workdir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gateway: GatewayConfig::default(),
            filter: FilterConfig::default(),
            injection: InjectionConfig::default(),
            paraphrase: ParaphraseConfig::default(),
            workdir: None,
            workers: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config field {field} {message}")]
    Range {
        field: &'static str,
        message: String,
    },
}

fn range(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        field,
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.gateway;
        if !self.filter.is_valid() {
            return Err(range(
                "filter.tau",
                format!("must be within [0, 1], got {}", self.filter.tau),
            ));
        }
        if self.paraphrase.k == 0 {
            return Err(range("paraphrase.k", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(range("workers", "must be at least 1"));
        }
        if !(g.timeout > 0.0 && g.timeout.is_finite()) {
            return Err(range(
                "gateway.timeout",
                format!("must be positive, got {}", g.timeout),
            ));
        }
        if !(g.backoff_base > 0.0 && g.backoff_base.is_finite()) {
            return Err(range(
                "gateway.backoff_base",
                format!("must be positive, got {}", g.backoff_base),
            ));
        }
        if g.max_in_flight == 0 {
            return Err(range("gateway.max_in_flight", "must be at least 1"));
        }
        if !(g.is_mock() || g.endpoint.starts_with("http://") || g.endpoint.starts_with("https://"))
        {
            return Err(range(
                "gateway.endpoint",
                format!("must be \"mock\" or an http(s) URL, got {:?}", g.endpoint),
            ));
        }
        Ok(())
    }
}

/// Parses and validates a config; missing fields take their defaults.
pub fn load_config(input: &str) -> Result<PipelineConfig, ConfigError> {
    let cfg: PipelineConfig = serde_json::from_str(input)?;
    cfg.validate()?;
    Ok(cfg)
}
