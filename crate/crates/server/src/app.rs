use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::Router;
use chatpoints_core::{load_dataset, Dataset};
use chatpoints_dialogue::{Dialogue, DialogueSettings, PersonaRegistry};
use chatpoints_gateway::{GatewayConfig, TtsClient};

use crate::projection::{JobStatus, ProjectionJob};
use crate::routes;

/// Sessions and notes live under `<data>/STATE_DIR`.
pub const STATE_DIR: &str = "state";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub assets_dir: Option<PathBuf>,
    pub gateway: GatewayConfig,
    /// Persona file replacing the built-in registry.
    pub personas: Option<PathBuf>,
    /// Start a default projection at startup when no layout is available.
    pub auto_project: bool,
    pub history_cap: usize,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            assets_dir: None,
            gateway: GatewayConfig::default(),
            personas: None,
            auto_project: false,
            history_cap: chatpoints_dialogue::DEFAULT_HISTORY_CAP,
        }
    }
}

pub struct AppState {
    pub dataset: Arc<Dataset>,
    pub projection: ProjectionJob,
    pub dialogue: Dialogue,
    pub tts: TtsClient,
}

/// Load everything under `config.data_dir` and build the router.
pub fn build(config: &ServerConfig) -> anyhow::Result<(Router, Arc<AppState>)> {
    let dataset: Dataset = load_dataset(&config.data_dir)
        .with_context(|| format!("loading dataset from {}", config.data_dir.display()))?;
    let dataset = Arc::new(dataset);
    let registry = match &config.personas {
        Some(path) => PersonaRegistry::load(path)?,
        None => PersonaRegistry::builtin(),
    };
    let provider = config.gateway.build_provider()?;
    let settings = DialogueSettings {
        model_name: config.gateway.model.clone(),
        temperature: config.gateway.temperature,
        max_tokens: config.gateway.max_tokens,
        history_cap: config.history_cap,
    };
    let dialogue = Dialogue::open(config.data_dir.join(STATE_DIR), registry, provider, settings)?;
    let tts = TtsClient::new(config.gateway.tts.clone())?;
    let projection = ProjectionJob::open(dataset.clone(), &config.data_dir);

    if config.auto_project && matches!(projection.status(), JobStatus::Idle) {
        match projection.start(projection.default_config()) {
            Ok(_) => tracing::info!("projection started"),
            Err(e) => tracing::warn!(error = ?e, "could not start projection"),
        }
    }

    let state = Arc::new(AppState {
        dataset,
        projection,
        dialogue,
        tts,
    });
    Ok((routes::router(state.clone(), config.assets_dir.as_deref()), state))
}

/// Serve until the process is stopped.
pub async fn serve(config: &ServerConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let (router, state) = build(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(
        addr = %listener.local_addr()?,
        instances = state.dataset.len(),
        provider = state.dialogue.provider_id(),
        "serving"
    );
    axum::serve(listener, router).await?;
    Ok(())
}
