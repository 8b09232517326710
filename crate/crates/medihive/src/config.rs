//! Run configuration file: human-editable TOML with `[protocol]`,
//! `[ablation]`, and `[backend]` sections, resolved into a validated
//! [`ProtocolConfig`] before any backend call.
//!
//! ```toml
//! [protocol]
//! n = 5
//! k_max = 5
//! t_debate = 2
//! tau_agree = 0.8
//! seed = 42
//! scheduler = "sequential"
//!
//! [ablation]
//! cot = true
//! role_assignment = true
//! weighted_voting = true
//!
//! [backend]
//! kind = "scripted"
//!
//! [[backend.agents]]
//! behavior = "fixed_answer"
//! answer = "C"
//! confidence = 0.7
//! ```
//!
//! An LLM backend replaces the agents list with a `[backend.llm]` table
//! (`base_url`, `model`, sampling and retry settings).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::ScriptedBehavior;
use crate::engine::{AblationFlags, BackendConfig, ProtocolConfig, Scheduler};
use crate::llm_backend::EndpointConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize, Serialize)]
struct ConfigFile {
    #[serde(default)]
    protocol: ProtocolSection,
    #[serde(default)]
    ablation: AblationFlags,
    backend: BackendSection,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default)]
struct ProtocolSection {
    n: usize,
    k_max: u32,
    t_debate: u32,
    tau_agree: f64,
    seed: u64,
    scheduler: Scheduler,
    include_contexts: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            n: 5,
            k_max: 5,
            t_debate: 2,
            tau_agree: 0.8,
            seed: 0,
            scheduler: Scheduler::Sequential,
            include_contexts: true,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct BackendSection {
    kind: BackendKind,
    #[serde(default)]
    agents: Vec<ScriptedBehavior>,
    #[serde(default)]
    llm: Option<EndpointConfig>,
}

#[derive(Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum BackendKind {
    Scripted,
    Llm,
}

/// Parse and validate a config from TOML text.
pub fn parse_config(text: &str) -> Result<ProtocolConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let backend = match file.backend.kind {
        BackendKind::Scripted => {
            if file.backend.agents.is_empty() {
                return Err(ConfigError::Invalid(
                    "scripted backend requires at least one [[backend.agents]] entry".into(),
                ));
            }
            BackendConfig::Scripted(file.backend.agents)
        }
        BackendKind::Llm => match file.backend.llm {
            Some(endpoint) => BackendConfig::Llm(endpoint),
            None => {
                return Err(ConfigError::Invalid(
                    "llm backend requires a [backend.llm] table".into(),
                ))
            }
        },
    };
    let config = ProtocolConfig {
        n: file.protocol.n,
        k_max: file.protocol.k_max,
        t_debate: file.protocol.t_debate,
        tau_agree: file.protocol.tau_agree,
        seed: file.protocol.seed,
        ablation: file.ablation,
        backend,
        scheduler: file.protocol.scheduler,
        include_contexts: file.protocol.include_contexts,
    };
    config.validate().map_err(ConfigError::Invalid)?;
    Ok(config)
}

/// Load and validate a config file.
pub fn load_config(path: &Path) -> Result<ProtocolConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}
