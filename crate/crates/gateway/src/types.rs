use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// Default cap on the serialized size of a request.
pub const DEFAULT_REQUEST_BYTE_CAP: usize = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    /// The data point or cluster speaking; `assistant` on the wire.
    Character,
}

impl ChatRole {
    pub fn wire_name(self) -> &'static str {
        match self {
            ChatRole::User => "user",
            ChatRole::Character => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ProviderMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn character(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Character,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub system_prompt: String,
    pub messages: Vec<ProviderMessage>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ProviderRequest {
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.text.as_str())
    }

    /// Roles alternate, the final turn is the user's and the whole request
    /// stays under `byte_cap` once serialized.
    pub fn validate(&self, byte_cap: usize) -> Result<(), GatewayError> {
        let invalid = |m: String| Err(GatewayError::InvalidRequest(m));
        if !(self.temperature >= 0.0) {
            return invalid("temperature must be non-negative".into());
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be positive".into());
        }
        match self.messages.last() {
            Some(m) if m.role == ChatRole::User && !m.text.trim().is_empty() => {}
            _ => return invalid("request must end with a non-empty user turn".into()),
        }
        if let Some(w) = self.messages.windows(2).position(|w| w[0].role == w[1].role) {
            return invalid(format!("messages {w} and {} share a role", w + 1));
        }
        let size = serde_json::to_vec(self).map(|v| v.len()).unwrap_or(usize::MAX);
        if size > byte_cap {
            return invalid(format!("request is {size} bytes, cap is {byte_cap}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReply {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub provider_id: String,
}
