#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use chatpoints_core::{synthesize_dataset, Dataset, Instance, SynthesisSpec};
use chatpoints_gateway::{
    ChatProvider, GatewayError, ProviderReply, ProviderRequest, StubProvider,
};

pub const CAT: usize = 3;
pub const DOG: usize = 5;

/// Ten CIFAR-named classes, 50 each; 10 cats (ids 150..=159) sit with the dogs
/// and are predicted as dog.
pub fn scenario() -> Dataset {
    let spec = SynthesisSpec::new(10, 50, 16, 7).with_confusion(CAT, DOG, 0.2);
    synthesize_dataset(&spec).unwrap()
}

/// Eight correct dogs plus three cats predicted as dog.
pub fn eleven_cluster() -> Vec<u64> {
    let mut ids: Vec<u64> = (250..258).collect();
    ids.extend([150, 151, 152]);
    ids
}

/// The scenario with ids 79 and 150 swapped, so instance 79 is a cat
/// predicted as dog.
pub fn scenario_with_79_confused() -> Dataset {
    let ds = scenario();
    let m = ds.manifest();
    let identity = chatpoints_core::DatasetIdentity {
        dataset_name: m.dataset_name.clone(),
        model_name: m.model_name.clone(),
        class_names: m.class_names.clone(),
        class_colors: m.class_colors.clone(),
        dimensionality: m.dimensionality,
    };
    let instances: Vec<Instance> = ds
        .instances()
        .iter()
        .cloned()
        .map(|mut i| {
            i.id = match i.id {
                79 => 150,
                150 => 79,
                other => other,
            };
            i
        })
        .collect();
    Dataset::assemble(identity, instances).unwrap()
}

/// Records every request; replies like the stub unless told to fail or wait.
#[derive(Default)]
pub struct Recording {
    pub requests: Mutex<Vec<ProviderRequest>>,
    pub fail_with: Mutex<Option<GatewayError>>,
    pub delay: Option<Duration>,
}

impl Recording {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn slow(delay: Duration) -> Arc<Self> {
        Arc::new(Self {
            delay: Some(delay),
            ..Self::default()
        })
    }

    pub fn fail_next(&self, e: GatewayError) {
        *self.fail_with.lock().unwrap() = Some(e);
    }

    pub fn last(&self) -> ProviderRequest {
        self.requests.lock().unwrap().last().cloned().expect("no request recorded")
    }
}

#[async_trait]
impl ChatProvider for Recording {
    fn id(&self) -> &str {
        "recording"
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError> {
        request.validate(usize::MAX)?;
        self.requests.lock().unwrap().push(request.clone());
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        if let Some(e) = self.fail_with.lock().unwrap().take() {
            return Err(e);
        }
        StubProvider::new().complete(request).await
    }
}
