#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider rejected credentials (status {status})")]
    Auth { status: u16 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("upstream returned status {status} after {attempts} attempts")]
    Upstream { status: u16, attempts: u32 },
    #[error("malformed upstream body: {0}")]
    MalformedBody(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

impl GatewayError {
    /// Whether the caller may reasonably try the same request again later.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. }
                | GatewayError::Timeout { .. }
                | GatewayError::Transport { .. }
                | GatewayError::Upstream { .. }
        )
    }
}
