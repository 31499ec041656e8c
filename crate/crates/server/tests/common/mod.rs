#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use rulemesh_core::DialectId;
use rulemesh_server::control::ControlPlane;
use rulemesh_server::middleware::EngineService;
use rulemesh_server::registry::Registry;
use rulemesh_server::{gateway, middleware, registry, spawn, Registration};
use tokio::task::JoinHandle;

pub const DRL_DECLS: &str = "declare Person\n  name: string\n  age: integer\nend\ndeclare Adult\n  name: string\nend\n";
pub const CLIPS_DECLS: &str =
    "(deftemplate Person (slot name (type STRING)) (slot age (type INTEGER)))\n(deftemplate Adult (slot name (type STRING)))\n";
pub const DRL_ADULT: &str = "rule \"adult\"\nwhen\n  Person(age >= 18, name : $n)\nthen\n  insert Adult(name: $n);\nend\n";
pub const CLIPS_ADULT: &str = "(defrule adult (Person (age ?g0) (name ?n)) (test (>= ?g0 18)) => (assert (Adult (name ?n))))";
pub const CLIPS_NOT: &str = "(defrule lonely (not (Person (age 1))) => (assert (Adult (name \"x\"))))";

pub fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub struct Server {
    pub url: String,
    pub handle: JoinHandle<()>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

pub async fn registry(dir: Option<&Path>) -> Server {
    let reg = match dir {
        Some(d) => Registry::open(d).unwrap(),
        None => Registry::in_memory(),
    };
    let (addr, handle) = spawn(local(), registry::router(Arc::new(reg))).await.unwrap();
    Server { url: format!("http://{addr}"), handle }
}

pub struct EngineServer {
    pub server: Server,
    pub service: Arc<EngineService>,
    pub entry_id: Option<uuid::Uuid>,
}

pub async fn engine(dialect: DialectId, title: &str) -> EngineServer {
    let service = Arc::new(EngineService::new(dialect, title));
    let (addr, handle) = spawn(local(), middleware::router(service.clone())).await.unwrap();
    EngineServer { server: Server { url: format!("http://{addr}"), handle }, service, entry_id: None }
}

/// Starts an engine and registers it.
pub async fn registered_engine(registry_url: &str, dialect: DialectId, title: &str, group: Option<&str>) -> EngineServer {
    let mut e = engine(dialect, title).await;
    let reg = Registration::register(registry_url, title, &e.server.url, dialect, group).await.unwrap();
    e.entry_id = Some(reg.id);
    e
}

pub async fn gateway(registry_url: &str) -> Server {
    let app = gateway::router(ControlPlane::new(registry_url), None);
    let (addr, handle) = spawn(local(), app).await.unwrap();
    Server { url: format!("http://{addr}"), handle }
}

/// A URL on which nothing listens.
pub async fn dead_url() -> String {
    let l = tokio::net::TcpListener::bind(local()).await.unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}

pub fn http() -> reqwest::Client {
    reqwest::Client::new()
}
