use std::path::PathBuf;
use std::process::ExitCode;

use storyweave::config::EngineConfigFile;
use storyweave_service::{router, AppState};

const USAGE: &str = "usage: storyweave-server [--config <file.toml>]";

fn load_config() -> Result<EngineConfigFile, String> {
    let mut args = std::env::args().skip(1);
    let mut path: Option<PathBuf> = None;
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--config" => path = Some(args.next().ok_or(USAGE)?.into()),
            "-h" | "--help" => {
                println!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(format!("unexpected argument `{other}`\n{USAGE}")),
        }
    }
    let mut config = match path {
        Some(p) => EngineConfigFile::load(&p).map_err(|e| format!("ConfigError: {e}"))?,
        None => EngineConfigFile::default(),
    };
    config
        .apply_overrides(|k| std::env::var(k).ok())
        .map_err(|e| format!("ConfigError: {e}"))?;
    Ok(config)
}

#[tokio::main]
async fn main() -> ExitCode {
    let config = match load_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let listen = config.server.listen.clone();
    let state = match AppState::new(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("startup failed: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(&listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot listen on {listen}: {e}");
            return ExitCode::from(1);
        }
    };
    eprintln!("listening on {listen}, data under {}", state.store.root().display());
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("server error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
