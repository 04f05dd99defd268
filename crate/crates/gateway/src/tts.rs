//! Text-to-speech proxy.
//!
//! Requests follow the ElevenLabs convention: `POST` to the configured URL
//! (a `{voice_id}` placeholder is substituted), JSON body `{"text": ...}`,
//! key in the `xi-api-key` header. The audio bytes are relayed untouched.

use std::time::Duration;

use serde_json::json;

use crate::{ApiKey, GatewayError};

pub const MAX_TTS_CHARS: usize = 1000;
pub const DEFAULT_VOICE: &str = "default";
const DEFAULT_MIME: &str = "audio/mpeg";

#[derive(Debug, Clone, Default)]
pub struct TtsConfig {
    /// `None` disables speech.
    pub endpoint: Option<String>,
    pub api_key: Option<ApiKey>,
    pub timeout: Option<Duration>,
}

impl TtsConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn enabled(endpoint: impl Into<String>, api_key: Option<ApiKey>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            api_key,
            timeout: None,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.endpoint.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Speech {
    /// Speech is turned off; the UI stays silent.
    Disabled,
    Audio { bytes: Vec<u8>, mime: String },
}

#[derive(Debug, Clone)]
pub struct TtsClient {
    config: TtsConfig,
    http: reqwest::Client,
}

impl TtsClient {
    pub fn new(config: TtsConfig) -> Result<Self, GatewayError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout.unwrap_or(crate::live::DEFAULT_TIMEOUT))
            .build()
            .map_err(|e| GatewayError::NotConfigured(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn is_enabled(&self) -> bool {
        self.config.is_enabled()
    }

    fn redact(&self, text: &str) -> String {
        match &self.config.api_key {
            Some(k) => k.redact(text),
            None => text.to_string(),
        }
    }

    pub async fn speak(&self, text: &str, voice_id: &str) -> Result<Speech, GatewayError> {
        let Some(endpoint) = &self.config.endpoint else {
            return Ok(Speech::Disabled);
        };
        let chars = text.chars().count();
        if chars > MAX_TTS_CHARS {
            return Err(GatewayError::InvalidRequest(format!(
                "speech text is {chars} characters, limit is {MAX_TTS_CHARS}"
            )));
        }
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("speech text is empty".into()));
        }
        let url = endpoint.replace("{voice_id}", voice_id);
        let mut req = self
            .http
            .post(url)
            .header(reqwest::header::ACCEPT, DEFAULT_MIME)
            .json(&json!({ "text": text, "voice_id": voice_id }));
        if let Some(key) = &self.config.api_key {
            req = req.header("xi-api-key", key.expose());
        }
        let response = req.send().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout { attempts: 1 }
            } else {
                GatewayError::Transport {
                    attempts: 1,
                    message: self.redact(&e.to_string()),
                }
            }
        })?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(GatewayError::Auth {
                status: status.as_u16(),
            });
        }
        if !status.is_success() {
            return Err(GatewayError::Upstream {
                status: status.as_u16(),
                attempts: 1,
            });
        }
        let mime = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or(DEFAULT_MIME)
            .to_string();
        let bytes = response.bytes().await.map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: self.redact(&e.to_string()),
        })?;
        Ok(Speech::Audio {
            bytes: bytes.to_vec(),
            mime,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn disabled_never_touches_network() {
        let tts = TtsClient::new(TtsConfig::disabled()).unwrap();
        assert_eq!(tts.speak("hello", DEFAULT_VOICE).await.unwrap(), Speech::Disabled);
    }

    #[tokio::test]
    async fn over_cap_rejected_before_network() {
        // Port 9 is discard; a validation error proves no request was attempted.
        let tts = TtsClient::new(TtsConfig::enabled("http://127.0.0.1:9/{voice_id}", None)).unwrap();
        let err = tts.speak(&"x".repeat(MAX_TTS_CHARS + 1), "v").await.unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }
}
