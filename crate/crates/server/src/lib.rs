//! HTTP services: per-engine middleware, the Atom registry, and the
//! control-plane gateway.

pub mod api;
pub mod atom;
pub mod client;
pub mod control;
pub mod error;
pub mod gateway;
pub mod middleware;
pub mod registry;

use std::future::Future;
use std::net::SocketAddr;

pub use axum::Router;
use rulemesh_core::DialectId;
use tokio::net::TcpListener;
use uuid::Uuid;

use crate::atom::{Collection, Entry};
use crate::client::RegistryClient;
use crate::error::ApiError;

/// Serves `app` until `shutdown` resolves.
pub async fn serve(listener: TcpListener, app: Router, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves `app` in a background task. Returns the bound
/// address and a handle; aborting the handle stops the server.
pub async fn spawn(addr: SocketAddr, app: Router) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((bound, handle))
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}

/// An engine's registry entry, deleted again by [`Registration::withdraw`].
pub struct Registration {
    client: RegistryClient,
    pub id: Uuid,
}

impl Registration {
    pub async fn register(
        registry_url: &str,
        title: &str,
        base_url: &str,
        dialect: DialectId,
        replica_group: Option<&str>,
    ) -> Result<Self, ApiError> {
        let client = RegistryClient::new(registry_url);
        let entry = client.create(Collection::Engines, &Entry::engine(title, base_url, dialect, replica_group)).await?;
        let id = entry.id.expect("registry assigns ids");
        Ok(Registration { client, id })
    }

    pub async fn withdraw(self) -> Result<(), ApiError> {
        self.client.delete(Collection::Engines, self.id).await
    }
}
