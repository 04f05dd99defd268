//! OpenAI-compatible chat-completions client.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use crate::{
    ApiKey, ChatProvider, FinishReason, GatewayError, ProviderReply, ProviderRequest, RetryPolicy,
    DEFAULT_REQUEST_BYTE_CAP,
};

pub const LIVE_PROVIDER_ID: &str = "live";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub api_key: ApiKey,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub request_byte_cap: usize,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>, api_key: ApiKey) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            timeout: DEFAULT_TIMEOUT,
            retry: RetryPolicy::default(),
            request_byte_cap: DEFAULT_REQUEST_BYTE_CAP,
        }
    }
}

#[derive(Debug)]
pub struct LiveProvider {
    config: LiveConfig,
    http: reqwest::Client,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(Result<ProviderReply, GatewayError>),
    Retry(GatewayError),
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::NotConfigured(config.api_key.redact(&e.to_string())))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn body(request: &ProviderRequest) -> serde_json::Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.wire_name(), "content": m.text})),
        );
        json!({
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn parse(&self, bytes: &[u8], started: Instant) -> Result<ProviderReply, GatewayError> {
        let malformed = |m: String| GatewayError::MalformedBody(self.config.api_key.redact(&m));
        let body: CompletionBody =
            serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
        let choice = body
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| malformed("no choices in response".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        if finish_reason == FinishReason::Stop && text.is_empty() {
            return Err(malformed("empty completion".into()));
        }
        Ok(ProviderReply {
            text,
            finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            provider_id: LIVE_PROVIDER_ID.to_string(),
        })
    }

    async fn attempt(
        &self,
        body: &serde_json::Value,
        attempt: u32,
        started: Instant,
    ) -> Attempt {
        let sent = self
            .http
            .post(&self.config.endpoint)
            .bearer_auth(self.config.api_key.expose())
            .json(body)
            .send()
            .await;
        let response = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                tracing::warn!(attempt, "chat completion timed out");
                return Attempt::Retry(GatewayError::Timeout { attempts: attempt });
            }
            Err(e) => {
                let message = self.config.api_key.redact(&e.to_string());
                tracing::warn!(attempt, error = %message, "chat completion transport failure");
                return Attempt::Retry(GatewayError::Transport {
                    attempts: attempt,
                    message,
                });
            }
        };
        let status = response.status();
        match status {
            s if s.is_success() => match response.bytes().await {
                Ok(bytes) => Attempt::Done(self.parse(&bytes, started)),
                Err(e) => Attempt::Retry(GatewayError::Transport {
                    attempts: attempt,
                    message: self.config.api_key.redact(&e.to_string()),
                }),
            },
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                tracing::warn!(status = status.as_u16(), "chat provider rejected credentials");
                Attempt::Done(Err(GatewayError::Auth {
                    status: status.as_u16(),
                }))
            }
            StatusCode::TOO_MANY_REQUESTS => {
                tracing::warn!(attempt, "chat provider rate limited");
                Attempt::Retry(GatewayError::RateLimited { attempts: attempt })
            }
            s if s.is_server_error() => {
                tracing::warn!(attempt, status = s.as_u16(), "chat provider server error");
                Attempt::Retry(GatewayError::Upstream {
                    status: s.as_u16(),
                    attempts: attempt,
                })
            }
            s => Attempt::Done(Err(GatewayError::Upstream {
                status: s.as_u16(),
                attempts: attempt,
            })),
        }
    }
}

#[async_trait]
impl ChatProvider for LiveProvider {
    fn id(&self) -> &str {
        LIVE_PROVIDER_ID
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError> {
        request.validate(self.config.request_byte_cap)?;
        let body = Self::body(request);
        let started = Instant::now();
        let policy = self.config.retry;
        let mut attempt = 1;
        loop {
            match self.attempt(&body, attempt, started).await {
                Attempt::Done(result) => {
                    if let Ok(reply) = &result {
                        tracing::debug!(attempt, latency_ms = reply.latency_ms, "chat completion ok");
                    }
                    return result;
                }
                Attempt::Retry(err) if attempt >= policy.max_attempts => return Err(err),
                Attempt::Retry(_) => {
                    tokio::time::sleep(policy.delay_after(attempt)).await;
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ProviderMessage;

    #[test]
    fn wire_body_is_openai_shaped() {
        let req = ProviderRequest {
            system_prompt: "be nice".into(),
            messages: vec![ProviderMessage::character("hi"), ProviderMessage::user("yo")],
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 100,
        };
        let body = LiveProvider::body(&req);
        assert_eq!(body["model"], "gpt-3.5-turbo");
        let roles: Vec<&str> = body["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap())
            .collect();
        assert_eq!(roles, vec!["system", "assistant", "user"]);
        assert_eq!(body["messages"][0]["content"], "be nice");
    }
}
