use std::net::SocketAddr;

use tonebridge_core::templates::TemplateStore;
use tonebridge_service::ServiceState;

use crate::settings::{MockArgs, ServeArgs};
use crate::Failure;

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn bind(port: u16) -> Result<tokio::net::TcpListener, Failure> {
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Failure(format!("cannot listen on {addr}: {e}")))
}

async fn interrupted() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let term = async {
            match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
                Ok(mut s) => {
                    s.recv().await;
                }
                Err(_) => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => tonebridge_core::config::AppConfig::load(path)?,
        None => {
            let mut c = tonebridge_core::config::AppConfig::default();
            c.fill_missing_with_mock();
            c
        }
    };
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(ws) = args.workspace {
        config.workspace = ws;
    }
    let state = ServiceState::open(&config)?;
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = bind(config.port).await?;
        println!("listening on http://{}", listener.local_addr()?);
        println!("workspace {}", state.workspace().display());
        tonebridge_service::serve(listener, state, interrupted()).await?;
        Ok(())
    })
}

pub fn mock_backends(args: MockArgs) -> Result<(), Failure> {
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = bind(args.port).await?;
        println!("mock backends on http://{}", listener.local_addr()?);
        tonebridge_service::serve_mock_backends(listener, TemplateStore::builtin(), interrupted()).await?;
        Ok(())
    })
}
