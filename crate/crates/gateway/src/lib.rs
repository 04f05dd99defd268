//! Chat-model and speech providers behind one interface.
//!
//! [`StubProvider`] is deterministic and offline and is the default;
//! [`LiveProvider`] talks to any OpenAI-compatible chat-completions endpoint
//! with bounded retries. [`TtsClient`] proxies text-to-speech requests.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
pub mod live;
mod retry;
mod secret;
pub mod stub;
mod throttle;
pub mod tts;
mod types;

use async_trait::async_trait;

pub use config::{
    GatewayConfig, ProviderKind, DEFAULT_MAX_TOKENS, DEFAULT_MODEL, DEFAULT_TEMPERATURE,
};
pub use error::GatewayError;
pub use live::{LiveConfig, LiveProvider};
pub use retry::RetryPolicy;
pub use secret::ApiKey;
pub use stub::{numeric_tokens, prompt_section, StubProvider};
pub use throttle::{Throttled, DEFAULT_MAX_IN_FLIGHT};
pub use tts::{Speech, TtsClient, TtsConfig, MAX_TTS_CHARS};
pub use types::{
    ChatRole, FinishReason, ProviderMessage, ProviderReply, ProviderRequest,
    DEFAULT_REQUEST_BYTE_CAP,
};

#[async_trait]
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError>;
}

#[async_trait]
impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError> {
        (**self).complete(request).await
    }
}
