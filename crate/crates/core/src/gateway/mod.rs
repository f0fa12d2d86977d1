//! Text-generation backends behind one trait: a deterministic scripted
//! backend that executes each task type by rule, and a remote
//! chat-completions client.

pub mod remote;
pub mod scripted;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::Corpus;

pub use remote::{HttpResponse, RemoteBackend, ReqwestTransport, Transport};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// One prompt exchange sent to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output: u32,
    /// Agent this exchange serves; the remote backend uses it to apply
    /// per-agent model overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
}

impl ChatExchange {
    pub fn validate(&self) -> Result<()> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(Error::Config("exchange needs at least one user message".into()));
        }
        Ok(())
    }

    /// All message contents joined, in order. The scripted backend operates
    /// on this flattened view.
    pub fn flattened(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }
}

impl std::fmt::Display for ChatExchange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Tool => "tool",
            };
            writeln!(f, "=== {role} ===")?;
            writeln!(f, "{}", m.content)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

/// Backend selection and remote-endpoint settings.
///
/// The API key itself is never part of the config: only the name of the
/// environment variable holding it, so configs can be written to disk and
/// logged freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Base delay for exponential backoff between retries.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Upper bound on concurrent in-flight remote requests.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Optional per-agent model override (agent name -> model).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model_overrides: BTreeMap<String, String>,
}

fn default_timeout_secs() -> u64 {
    30
}
fn default_max_retries() -> u32 {
    2
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_max_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn scripted() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            retry_base_ms: default_retry_base_ms(),
            max_in_flight: default_max_in_flight(),
            model_overrides: BTreeMap::new(),
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            api_key_env: Some("LLM_API_KEY".into()),
            ..BackendConfig::scripted()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Remote {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(Error::Config("remote backend requires an endpoint".into()));
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err(Error::Config("remote backend requires a model name".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: BackendConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Accounting returned with every completion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    /// Attempts actually made, including the successful one.
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

/// A text-generation backend. Implementations must be safe to call from
/// multiple threads.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion>;
    fn kind(&self) -> BackendKind;
}

/// Builds the backend described by `config`. The scripted backend executes
/// tasks against `corpus`; the remote backend performs HTTP round trips.
pub fn backend_from_config(
    config: &BackendConfig,
    corpus: Arc<Corpus>,
) -> Result<Box<dyn CompletionBackend>> {
    config.validate()?;
    match config.kind {
        BackendKind::Scripted => Ok(Box::new(ScriptedBackend::new(corpus))),
        BackendKind::Remote => Ok(Box::new(RemoteBackend::over_http(config.clone())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_without_any_key_material() {
        let mut config = BackendConfig::remote("https://api.example.com/v1/chat/completions", "m1");
        config.api_key_env = Some("MY_KEY_VAR".into());
        let json = serde_json::to_string_pretty(&config).unwrap();
        assert!(!json.to_lowercase().contains("sk-"));
        assert!(json.contains("MY_KEY_VAR"), "env var NAME is config, the key is not");
        let back: BackendConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn remote_config_requires_endpoint_and_model() {
        let mut config = BackendConfig::scripted();
        config.kind = BackendKind::Remote;
        assert!(config.validate().is_err());
        config.endpoint = Some("https://api.example.com".into());
        assert!(config.validate().is_err());
        config.model_name = Some("m".into());
        assert!(config.validate().is_ok());
    }

    #[test]
    fn config_loads_from_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.json");
        std::fs::write(
            &path,
            r#"{"kind": "remote", "endpoint": "https://api.example.com/v1/chat/completions",
                "model_name": "m1", "api_key_env": "MY_KEY", "max_retries": 5}"#,
        )
        .unwrap();
        let config = BackendConfig::from_json_file(&path).unwrap();
        assert_eq!(config.kind, BackendKind::Remote);
        assert_eq!(config.max_retries, 5);
        assert_eq!(config.timeout_secs, 30, "defaults fill gaps");

        std::fs::write(&path, r#"{"kind": "remote"}"#).unwrap();
        assert!(BackendConfig::from_json_file(&path).is_err(), "remote needs endpoint");
    }

    #[test]
    fn exchange_requires_user_message() {
        let exchange = ChatExchange {
            messages: vec![Message {
                role: Role::System,
                content: "only system".into(),
            }],
            temperature: 0.0,
            max_output: 64,
            agent: None,
        };
        assert!(exchange.validate().is_err());
    }
}
