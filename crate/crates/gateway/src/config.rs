use std::sync::Arc;
use std::time::Duration;

use crate::{
    ApiKey, ChatProvider, GatewayError, LiveConfig, LiveProvider, StubProvider, Throttled,
    TtsConfig, DEFAULT_MAX_IN_FLIGHT,
};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    Stub,
    Live,
}

impl std::str::FromStr for ProviderKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "live" => Ok(Self::Live),
            other => Err(GatewayError::NotConfigured(format!(
                "unknown provider {other:?}; expected stub or live"
            ))),
        }
    }
}

/// Provider selection and generation settings.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    pub chat_url: Option<String>,
    pub chat_key: Option<ApiKey>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub tts: TtsConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Stub,
            chat_url: None,
            chat_key: None,
            model: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            timeout: crate::live::DEFAULT_TIMEOUT,
            tts: TtsConfig::disabled(),
        }
    }
}

impl GatewayConfig {
    /// Read `PROVIDER`, `CHAT_API_URL`, `CHAT_API_KEY`, `CHAT_MODEL`,
    /// `TTS_API_URL` and `TTS_API_KEY` from the process environment.
    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        let provider = match get("PROVIDER") {
            Some(p) => p.parse()?,
            None => ProviderKind::Stub,
        };
        let tts = match get("TTS_API_URL") {
            Some(url) => TtsConfig::enabled(url, get("TTS_API_KEY").map(ApiKey::new)),
            None => TtsConfig::disabled(),
        };
        Ok(Self {
            provider,
            chat_url: get("CHAT_API_URL"),
            chat_key: get("CHAT_API_KEY").map(ApiKey::new),
            model: get("CHAT_MODEL").unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            tts,
            ..Self::default()
        })
    }

    pub fn build_provider(&self) -> Result<Arc<dyn ChatProvider>, GatewayError> {
        match self.provider {
            ProviderKind::Stub => Ok(Arc::new(Throttled::new(StubProvider::new(), self.max_in_flight))),
            ProviderKind::Live => {
                let url = self
                    .chat_url
                    .clone()
                    .ok_or_else(|| GatewayError::NotConfigured("CHAT_API_URL is not set".into()))?;
                let key = self
                    .chat_key
                    .clone()
                    .ok_or_else(|| GatewayError::NotConfigured("CHAT_API_KEY is not set".into()))?;
                let mut config = LiveConfig::new(url, key);
                config.timeout = self.timeout;
                Ok(Arc::new(Throttled::new(LiveProvider::new(config)?, self.max_in_flight)))
            }
        }
    }
}
