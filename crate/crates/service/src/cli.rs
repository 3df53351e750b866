//! `litscout serve | run | inspect`.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use litscout_core::tracking::{RunStatus, RunTrigger};
use litscout_core::{Config, Engine};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use crate::api::{router, AppState};
use crate::scheduler;

#[derive(Debug, Parser)]
#[command(name = "litscout", version, about = "Watches research documents and suggests relevant literature")]
pub struct Cli {
    /// Config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true, env = "LITSCOUT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Override the data directory from the config.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,

    /// Debug logging (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the API, the static client and the scheduler.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Leave the scheduler heartbeat off.
        #[arg(long)]
        no_scheduler: bool,
    },
    /// Run one update for a project and print the run record.
    Run {
        #[arg(long)]
        project: String,
    },
    /// Print a project's persisted state as JSON.
    Inspect {
        #[arg(long)]
        project: String,
    },
}

pub fn init_logging(verbose: bool) {
    let filter = EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| EnvFilter::new(if verbose { "debug" } else { "info" }));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

/// Engine for `config` with its seed projects registered.
pub fn build_engine(config: &Config) -> anyhow::Result<Arc<Engine>> {
    let engine = Engine::from_config(config).context("building engine")?;
    for seed in &config.seed_projects {
        engine
            .ensure_seed(seed)
            .with_context(|| format!("registering seed project {}", seed.id))?;
    }
    Ok(Arc::new(engine))
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = load_config(&cli)?;
    let engine = build_engine(&config)?;
    match cli.command {
        Command::Serve { bind, no_scheduler } => {
            serve(config, engine, bind, no_scheduler)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { project } => {
            let run = engine.run_update(&project, RunTrigger::Manual, None)?;
            print_json(&run)?;
            Ok(if run.status == RunStatus::Failed {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Inspect { project } => {
            let dump = json!({
                "project": engine.project_details(&project)?,
                "papers": engine.catalog(&project)?,
                "questions": engine.questions(&project)?,
                "suggestions": engine.suggestions(&project, None)?,
                "runs": engine.runs(&project)?,
                "schedule": engine.scheduler_state()?.projects.get(&project),
            });
            print_json(&dump)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Pretty JSON on stdout; a closed pipe (`| head`) is not an error.
fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(out));
    match written {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn serve(config: Config, engine: Arc<Engine>, bind: Option<SocketAddr>, no_scheduler: bool) -> anyhow::Result<()> {
    let addr = bind.unwrap_or(config.bind);
    let state = AppState::new(engine.clone())
        .with_token(Config::api_token())
        .with_static_dir(config.static_dir.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, data = %config.data_dir.display(), "serving");
        let heartbeat = (config.scheduler.enabled && !no_scheduler)
            .then(|| scheduler::spawn(engine, config.tick_interval()));
        crate::server::serve(listener, router(state), async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
        if let Some(h) = heartbeat {
            h.abort();
        }
        anyhow::Ok(())
    })
}
