use std::sync::Arc;

use async_trait::async_trait;
use tokio::sync::Semaphore;

use crate::{ChatProvider, GatewayError, ProviderReply, ProviderRequest};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Caps concurrent calls into the wrapped provider; excess callers queue.
pub struct Throttled<P> {
    inner: P,
    permits: Arc<Semaphore>,
}

impl<P> Throttled<P> {
    pub fn new(inner: P, max_in_flight: usize) -> Self {
        Self {
            inner,
            permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
        }
    }

    pub fn available(&self) -> usize {
        self.permits.available_permits()
    }
}

#[async_trait]
impl<P: ChatProvider> ChatProvider for Throttled<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| GatewayError::NotConfigured("provider shut down".into()))?;
        self.inner.complete(request).await
    }
}
