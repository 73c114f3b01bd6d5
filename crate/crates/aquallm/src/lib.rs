//! File formats, the HTTP model gateway and the stage driver for the
//! AQUALLM dataset pipeline. The pure pipeline logic lives in
//! [`aquallm_core`], re-exported here as [`core`].

pub use aquallm_core as core;

pub mod config;
pub mod conllu;
pub mod export;
pub mod gateway;
pub mod manifest;
pub mod pipeline;

pub use config::{load_config, ConfigError, PipelineConfig};
pub use gateway::{build_gateway, GatewayConfig, HttpGateway};
pub use pipeline::{Pipeline, PipelineError, Stage};
