//! Remote chat-completions backend.
//!
//! The wire contract is the de-facto chat-completions JSON shape: a
//! `messages` array in, a `choices` array out. Transport is a trait so tests
//! replay recorded fixtures instead of touching the network; retry accounting
//! is identical either way.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::{
    BackendConfig, BackendKind, ChatExchange, Completion, CompletionBackend, Role, Usage,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST of a JSON body. Implementations decide how bytes move.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse>;
}

/// Production transport over a blocking HTTP client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse> {
        let mut req = self
            .client
            .post(url)
            .header("Content-Type", "application/json")
            .timeout(timeout)
            .body(body.to_string());
        if let Some(key) = bearer {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(timeout)
            } else {
                // Connection-level failures are transient from the caller's
                // point of view; surface them like timeouts so they retry.
                Error::Timeout(timeout)
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| Error::MalformedResponse(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Limiter {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().expect("limiter mutex poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("limiter mutex poisoned");
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter mutex poisoned");
        *permits += 1;
        self.limiter.cv.notify_one();
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct RemoteBackend<T: Transport> {
    config: BackendConfig,
    transport: T,
    limiter: Limiter,
    sleeper: Sleeper,
}

impl RemoteBackend<ReqwestTransport> {
    pub fn over_http(config: BackendConfig) -> Result<Self> {
        let transport = ReqwestTransport::new(Duration::from_secs(config.timeout_secs))?;
        Ok(RemoteBackend::with_transport(config, transport))
    }
}

impl<T: Transport> RemoteBackend<T> {
    pub fn with_transport(config: BackendConfig, transport: T) -> Self {
        let limiter = Limiter::new(config.max_in_flight);
        RemoteBackend {
            config,
            transport,
            limiter,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff sleeper (tests use a no-op).
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn api_key(&self) -> Result<Option<String>> {
        match self.config.api_key_env.as_deref() {
            None | Some("") => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) => Ok(Some(key)),
                Err(_) => Err(Error::Config(format!(
                    "api key environment variable {var} is not set"
                ))),
            },
        }
    }

    fn model_for(&self, exchange: &ChatExchange) -> String {
        if let Some(agent) = &exchange.agent {
            if let Some(model) = self.config.model_overrides.get(agent) {
                return model.clone();
            }
        }
        self.config
            .model_name
            .clone()
            .unwrap_or_else(|| "default".to_string())
    }

    fn request_body(&self, exchange: &ChatExchange) -> String {
        // Tool outputs are orchestrator-inlined; on the wire they travel as
        // user turns so any chat-completions server accepts them.
        let messages: Vec<serde_json::Value> = exchange
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User | Role::Tool => "user",
                };
                serde_json::json!({"role": role, "content": m.content})
            })
            .collect();
        serde_json::json!({
            "model": self.model_for(exchange),
            "messages": messages,
            "temperature": exchange.temperature,
            "max_tokens": exchange.max_output,
        })
        .to_string()
    }
}

fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// Extracts the assistant text from a chat-completions response body.
pub fn extract_completion_text(body: &str) -> Result<(String, Option<u64>, Option<u64>)> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| Error::MalformedResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::MalformedResponse("response has no choices".into()))?;
    let (pt, ct) = wire
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((None, None));
    Ok((choice.message.content, pt, ct))
}

impl<T: Transport> CompletionBackend for RemoteBackend<T> {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion> {
        exchange.validate()?;
        self.config.validate()?;
        let endpoint = self.config.endpoint.as_deref().expect("validated above");
        let key = self.api_key()?;
        let body = self.request_body(exchange);
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let max_attempts = self.config.max_retries + 1;

        let _permit = self.limiter.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let outcome = self
                .transport
                .post_json(endpoint, key.as_deref(), &body, timeout);
            let retryable_error = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let (text, prompt_tokens, completion_tokens) =
                        extract_completion_text(&resp.body)?;
                    return Ok(Completion {
                        text,
                        usage: Usage {
                            attempts,
                            prompt_tokens,
                            completion_tokens,
                        },
                    });
                }
                Ok(resp) if retryable_status(resp.status) => Error::RemoteRefusal {
                    status: resp.status,
                    body: resp.body,
                },
                Ok(resp) => {
                    return Err(Error::RemoteRefusal {
                        status: resp.status,
                        body: resp.body,
                    })
                }
                Err(e @ Error::Timeout(_)) => e,
                Err(other) => return Err(other),
            };
            if attempts >= max_attempts {
                return Err(retryable_error);
            }
            let delay = self
                .config
                .retry_base_ms
                .saturating_mul(1u64 << (attempts - 1).min(16));
            (self.sleeper)(Duration::from_millis(delay));
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
}
