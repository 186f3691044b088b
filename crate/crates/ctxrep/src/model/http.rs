//! OpenAI-compatible chat-completions client over HTTPS with bounded
//! exponential-backoff retries and an optional request/response audit log.

use super::{Capability, GenerationResult, Model, ModelError};
use crate::prompt::{ChatMessage, ChatRole};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Bounded exponential backoff. Rate limiting (HTTP 429) and server errors
/// are retryable; other client errors are fatal.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        use rand::Rng;
        let base = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16));
        let ms = if self.jitter {
            let factor: f64 = rand::thread_rng().gen_range(0.5..1.5);
            (base as f64 * factor) as u64
        } else {
            base
        };
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to the API root, e.g. `https://host/v1`. The client posts
    /// to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token. The token
    /// itself is read per request and never stored in results.
    pub api_key_env: Option<String>,
    /// Whether the endpoint exposes per-token log-probabilities; gates the
    /// ScoreTarget capability.
    pub supports_logprobs: bool,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    /// Append every request and response to this JSONL file.
    pub log_io: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_key_env: None,
            supports_logprobs: false,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
            log_io: None,
        }
    }
}

/// Canonical request body. Field order is fixed so identical inputs always
/// serialize to identical bytes.
#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    max_tokens: u32,
    temperature: f64,
    logprobs: bool,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<LogprobsPayload>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct LogprobsPayload {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

pub struct HttpModel {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    audit: Option<Mutex<std::fs::File>>,
}

impl HttpModel {
    pub fn new(config: HttpConfig) -> Result<Self, ModelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ModelError::InvalidInput(format!("http client: {e}")))?;
        let audit = match &config.log_io {
            Some(path) => {
                let file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)?;
                Some(Mutex::new(file))
            }
            None => None,
        };
        Ok(HttpModel {
            config,
            client,
            audit,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// The serialized request body for the given inputs. Byte-stable for
    /// fixed inputs, which makes request logs replayable.
    pub fn request_body(
        &self,
        messages: &[ChatMessage],
        max_tokens: u32,
        temperature: f64,
        logprobs: bool,
    ) -> String {
        serde_json::to_string(&ChatCompletionRequest {
            model: &self.config.model_id,
            messages,
            max_tokens,
            temperature,
            logprobs,
        })
        .expect("request serializes")
    }

    fn completions_url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        )
    }

    fn bearer_token(&self) -> Option<String> {
        let var = self.config.api_key_env.as_deref()?;
        std::env::var(var).ok().filter(|token| !token.is_empty())
    }

    fn audit_line(&self, kind: &str, payload: serde_json::Value) {
        if let Some(audit) = &self.audit {
            let line = serde_json::json!({
                "ts_ms": now_ms(),
                "kind": kind,
                "payload": payload,
            });
            if let Ok(mut file) = audit.lock() {
                let _ = writeln!(file, "{line}");
            }
        }
    }

    /// POST the body with retries. Returns the response body text.
    fn post_with_retries(&self, body: &str) -> Result<String, ModelError> {
        let url = self.completions_url();
        let mut last_error = String::new();
        for attempt in 0..self.config.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.retry.backoff(attempt - 1));
            }
            self.audit_line(
                "request",
                serde_json::json!({ "url": url, "attempt": attempt + 1, "body": body }),
            );
            let mut request = self
                .client
                .post(&url)
                .header("Content-Type", "application/json")
                .body(body.to_string());
            if let Some(token) = self.bearer_token() {
                request = request.header("Authorization", format!("Bearer {token}"));
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().unwrap_or_default();
                    self.audit_line(
                        "response",
                        serde_json::json!({ "status": status.as_u16(), "attempt": attempt + 1, "body": text }),
                    );
                    if status.is_success() {
                        return Ok(text);
                    }
                    let excerpt: String = text.chars().take(200).collect();
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(ModelError::Fatal {
                            status: status.as_u16(),
                            excerpt,
                        });
                    }
                    last_error = format!("http {status}: {excerpt}");
                }
                Err(e) => {
                    last_error = e.to_string();
                    self.audit_line(
                        "error",
                        serde_json::json!({ "attempt": attempt + 1, "message": last_error }),
                    );
                }
            }
        }
        Err(ModelError::Retryable {
            attempts: self.config.retry.max_attempts,
            message: last_error,
        })
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Model for HttpModel {
    fn name(&self) -> &str {
        &self.config.model_id
    }

    fn supports(&self, capability: Capability) -> bool {
        match capability {
            Capability::Generate => true,
            Capability::ScoreTarget => self.config.supports_logprobs,
        }
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        max_tokens: u32,
        temperature: f64,
    ) -> Result<GenerationResult, ModelError> {
        if messages.is_empty() {
            return Err(ModelError::EmptyMessages);
        }
        let body = self.request_body(
            messages,
            max_tokens,
            temperature,
            self.config.supports_logprobs,
        );
        let started = Instant::now();
        let text = self.post_with_retries(&body)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let parsed: ChatCompletionResponse = serde_json::from_str(&text)
            .map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ModelError::MalformedResponse("no choices in response".into()))?;
        let token_logprobs = choice
            .logprobs
            .and_then(|l| l.content)
            .map(|tokens| tokens.into_iter().map(|t| t.logprob).collect::<Vec<f64>>())
            .filter(|v| !v.is_empty());
        Ok(GenerationResult {
            text: choice
                .message
                .content
                .ok_or_else(|| ModelError::MalformedResponse("choice has no content".into()))?,
            finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
            token_logprobs,
            latency_ms,
        })
    }

    /// Force `target` as a final assistant message and request per-token
    /// log-probabilities for it, reporting their mean. What the server scores
    /// is backend-relative: endpoints that do not return logprobs for forced
    /// continuations yield a capability error rather than a fabricated score.
    fn score_target(&self, messages: &[ChatMessage], target: &str) -> Result<f64, ModelError> {
        if messages.is_empty() {
            return Err(ModelError::EmptyMessages);
        }
        if target.trim().is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        if !self.config.supports_logprobs {
            return Err(ModelError::Capability(format!(
                "endpoint for '{}' is not configured with per-token log-probabilities",
                self.config.model_id
            )));
        }
        let mut forced: Vec<ChatMessage> = messages.to_vec();
        forced.push(ChatMessage {
            role: ChatRole::Assistant,
            content: target.to_string(),
        });
        let body = self.request_body(&forced, 1, 0.0, true);
        let text = self.post_with_retries(&body)?;
        let parsed: ChatCompletionResponse = serde_json::from_str(&text)
            .map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
        let logprobs = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .and_then(|l| l.content)
            .unwrap_or_default();
        if logprobs.is_empty() {
            return Err(ModelError::Capability(
                "endpoint returned no per-token log-probabilities for the forced continuation"
                    .into(),
            ));
        }
        let sum: f64 = logprobs.iter().map(|t| t.logprob).sum();
        Ok(sum / logprobs.len() as f64)
    }
}
