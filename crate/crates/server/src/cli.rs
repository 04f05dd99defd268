use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chatpoints_core::synth::default_class_names;
use chatpoints_core::{
    load_dataset, run_projection, synthesize_dataset, write_dataset, Confusion, Dataset,
    Initialization, ProjectionConfig, SynthesisSpec,
};
use chatpoints_gateway::{GatewayConfig, ProviderKind};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::app::{serve, ServerConfig};
use crate::projection::ProjectionFile;

#[derive(Debug, Parser)]
#[command(name = "chatpoints", version, about = "Talk to the points of a t-SNE projection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and optionally write a normalized copy.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Only validate; write nothing.
        #[arg(long)]
        check: bool,
        #[arg(long, conflicts_with = "check")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with planted confusions.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        /// `from:to:fraction`, classes by index or name; repeatable.
        #[arg(long = "confuse")]
        confusions: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Compute a t-SNE layout and write it as JSON.
    Project {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_init, default_value = "random_gaussian")]
        init: Initialization,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory of static frontend files.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// `stub` or `live`; defaults to the PROVIDER environment variable, then `stub`.
        #[arg(long)]
        provider: Option<ProviderKind>,
        /// JSON persona file replacing the built-in registry.
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Do not start a projection at startup when no layout exists.
        #[arg(long)]
        no_auto_project: bool,
    },
}

fn parse_init(s: &str) -> Result<Initialization, String> {
    match s {
        "random_gaussian" | "random" => Ok(Initialization::RandomGaussian),
        "pca" => Ok(Initialization::Pca),
        other => Err(format!("unknown init {other:?}; expected random_gaussian or pca")),
    }
}

fn summary(ds: &Dataset, path: &Path) -> serde_json::Value {
    let m = ds.manifest();
    json!({
        "path": path,
        "dataset_name": m.dataset_name,
        "num_instances": m.num_instances,
        "num_classes": m.num_classes,
        "dimensionality": m.dimensionality,
        "overall_accuracy": m.overall_accuracy,
    })
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest {
            manifest,
            check,
            out,
        } => {
            let ds: Dataset = load_dataset(&manifest)?;
            let written = match out {
                Some(dir) if !check => Some(write_dataset(&dir, &ds)?),
                _ => None,
            };
            println!("{}", summary(&ds, written.as_deref().unwrap_or(&manifest)));
        }
        Command::Synth {
            classes,
            per_class,
            dim,
            confusions,
            seed,
            out,
            name,
        } => {
            let names = default_class_names(classes);
            let mut spec = SynthesisSpec::new(classes, per_class, dim, seed);
            spec.dataset_name = name;
            for c in &confusions {
                spec.confusions.push(Confusion::parse_with_names(c, &names)?);
            }
            let ds: Dataset = synthesize_dataset(&spec)?;
            let path = write_dataset(&out, &ds)?;
            println!("{}", summary(&ds, &path));
        }
        Command::Project {
            data,
            perplexity,
            iters,
            seed,
            init,
            out,
        } => {
            let ds: Dataset = load_dataset(&data)?;
            let config = cli_projection_config(perplexity, iters, seed, init);
            let started = std::time::Instant::now();
            let result = run_projection(ds.embedding_matrix().view(), &config)?;
            let file = ProjectionFile::from_result(&ds, &result);
            file.write(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}",
                json!({
                    "out": out,
                    "points": file.points.len(),
                    "final_kl": result.diagnostics.final_kl,
                    "elapsed_ms": started.elapsed().as_millis() as u64,
                })
            );
        }
        Command::Serve {
            data,
            port,
            host,
            assets,
            provider,
            personas,
            no_auto_project,
        } => {
            let mut gateway = GatewayConfig::from_env()?;
            if let Some(p) = provider {
                gateway.provider = p;
            }
            if let Some(dir) = &assets {
                if !dir.is_dir() {
                    bail!("assets directory {} does not exist", dir.display());
                }
            }
            let config = ServerConfig {
                assets_dir: assets,
                gateway,
                personas,
                auto_project: !no_auto_project,
                ..ServerConfig::new(data)
            };
            serve(&config, SocketAddr::new(host, port)).await?;
        }
    }
    Ok(())
}

/// Defaults with the requested overrides; the exaggeration phase and the
/// momentum switch are shortened to fit runs under 250 iterations.
pub fn cli_projection_config(
    perplexity: f64,
    iters: usize,
    seed: u64,
    init: Initialization,
) -> ProjectionConfig {
    let mut config = ProjectionConfig {
        perplexity,
        num_iterations: iters,
        seed,
        init,
        ..ProjectionConfig::default()
    };
    config.exaggeration_iters = config.exaggeration_iters.min(iters);
    config.momentum_switch_iter = config.momentum_switch_iter.min(iters);
    config
}
