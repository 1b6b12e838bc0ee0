use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use orality_core::session::SessionConfig;
use orality_server::app::{router, AppState};
use orality_server::cli::Cli;
use orality_server::http_providers::ProviderConfig;
use tracing_subscriber::EnvFilter;

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&cli.log_level).context("invalid --log-level")?)
        .init();

    let params = cli
        .layout_params()
        .map_err(anyhow::Error::msg)
        .context("invalid layout flags")?;
    // Blocking HTTP clients must be built outside the async runtime.
    let providers = if cli.mock_providers {
        orality_server::mock_providers()
    } else {
        ProviderConfig::from_env()?.build()?
    };
    for dir in [&cli.session_dir, &cli.export_dir].into_iter().flatten() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let state = Arc::new(AppState::new(
        providers,
        SessionConfig {
            session_dir: cli.session_dir.clone(),
            export_dir: cli.export_dir.clone(),
        },
        params,
        cli.conflict_settings(),
    ));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cli.addr())
            .await
            .with_context(|| format!("binding {}", cli.addr()))?;
        tracing::info!(addr = %listener.local_addr()?, mock = cli.mock_providers, "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })
}
