//! AtomPub-subset registry with a file store: one XML document per entry
//! under `<data-dir>/<collection>/<uuid>.xml`, replaced by atomic rename.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::PathRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::{DateTime, TimeDelta, Utc};
use rulemesh_core::{Code, Diagnostic};
use uuid::Uuid;

use crate::atom::{self, Collection, Entry};
use crate::error::{self, ApiError};

pub const ENTRY_TYPE: &str = "application/atom+xml;type=entry";
pub const FEED_TYPE: &str = "application/atom+xml;type=feed";

#[derive(Debug)]
pub enum StoreError {
    Io(PathBuf, io::Error),
    Corrupt(PathBuf, Diagnostic),
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            StoreError::Corrupt(p, d) => write!(f, "{}: {d}", p.display()),
        }
    }
}

impl std::error::Error for StoreError {}

struct Inner {
    entries: BTreeMap<(Collection, Uuid), Entry>,
    /// Last timestamp handed out; new ones are strictly later.
    clock: DateTime<Utc>,
}

pub struct Registry {
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl Registry {
    /// A registry that keeps entries in memory only.
    pub fn in_memory() -> Self {
        Registry { dir: None, inner: Mutex::new(Inner { entries: BTreeMap::new(), clock: DateTime::<Utc>::UNIX_EPOCH }) }
    }

    /// Opens (creating if needed) a data directory and loads its entries.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let mut entries = BTreeMap::new();
        let mut clock = DateTime::<Utc>::UNIX_EPOCH;
        for c in Collection::ALL {
            let sub = dir.join(c.as_str());
            std::fs::create_dir_all(&sub).map_err(|e| StoreError::Io(sub.clone(), e))?;
            for item in std::fs::read_dir(&sub).map_err(|e| StoreError::Io(sub.clone(), e))? {
                let path = item.map_err(|e| StoreError::Io(sub.clone(), e))?.path();
                if path.extension().is_none_or(|x| x != "xml") {
                    continue;
                }
                let xml = std::fs::read_to_string(&path).map_err(|e| StoreError::Io(path.clone(), e))?;
                let entry = atom::parse_entry(&xml).map_err(|d| StoreError::Corrupt(path.clone(), d))?;
                let (Some(id), Some(updated), Some(_)) = (entry.id, entry.updated, entry.published) else {
                    let d = Diagnostic::new(Code::EBadRequest, "stored entry lacks id or timestamps");
                    return Err(StoreError::Corrupt(path, d));
                };
                clock = clock.max(updated);
                entries.insert((c, id), entry);
            }
        }
        Ok(Registry { dir: Some(dir), inner: Mutex::new(Inner { entries, clock }) })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, collection: Collection, entry: &Entry) -> Result<(), ApiError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let id = entry.id.expect("stored entries have ids");
        let path = dir.join(collection.as_str()).join(format!("{id}.xml"));
        write_atomically(&path, &entry.to_xml(collection)).map_err(|e| io_error(&path, e))
    }

    fn unpersist(&self, collection: Collection, id: Uuid) -> Result<(), ApiError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(collection.as_str()).join(format!("{id}.xml"));
        match std::fs::remove_file(&path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(io_error(&path, e)),
            _ => Ok(()),
        }
    }

    /// Entries of `collection`, newest `updated` first.
    pub fn feed(&self, collection: Collection) -> Vec<Entry> {
        let inner = self.lock();
        let mut out: Vec<Entry> = inner.entries.iter().filter(|((c, _), _)| *c == collection).map(|(_, e)| e.clone()).collect();
        out.sort_by(|a, b| b.updated.cmp(&a.updated).then(a.id.cmp(&b.id)));
        out
    }

    pub fn get(&self, collection: Collection, id: Uuid) -> Result<Entry, ApiError> {
        self.lock().entries.get(&(collection, id)).cloned().ok_or_else(|| missing(id))
    }

    pub fn create(&self, collection: Collection, mut entry: Entry) -> Result<Entry, ApiError> {
        if entry.id.is_some() {
            return Err(ApiError::bad_request("entry ids are assigned by the registry"));
        }
        entry.validate(collection)?;
        let mut inner = self.lock();
        let now = tick(&mut inner);
        let id = loop {
            let id = Uuid::new_v4();
            if !inner.entries.contains_key(&(collection, id)) {
                break id;
            }
        };
        entry.id = Some(id);
        entry.published = Some(now);
        entry.updated = Some(now);
        self.persist(collection, &entry)?;
        inner.entries.insert((collection, id), entry.clone());
        Ok(entry)
    }

    pub fn update(&self, collection: Collection, id: Uuid, mut entry: Entry) -> Result<Entry, ApiError> {
        if entry.id.is_some_and(|x| x != id) {
            return Err(ApiError::bad_request("entry id does not match the request URL"));
        }
        entry.validate(collection)?;
        let mut inner = self.lock();
        let published = inner.entries.get(&(collection, id)).ok_or_else(|| missing(id))?.published;
        let now = tick(&mut inner);
        entry.id = Some(id);
        entry.published = published;
        entry.updated = Some(now);
        self.persist(collection, &entry)?;
        inner.entries.insert((collection, id), entry.clone());
        Ok(entry)
    }

    pub fn delete(&self, collection: Collection, id: Uuid) -> Result<(), ApiError> {
        let mut inner = self.lock();
        if !inner.entries.contains_key(&(collection, id)) {
            return Err(missing(id));
        }
        self.unpersist(collection, id)?;
        inner.entries.remove(&(collection, id));
        Ok(())
    }
}

/// Millisecond timestamps, strictly increasing across the registry.
fn tick(inner: &mut Inner) -> DateTime<Utc> {
    let now = Utc::now();
    let now = DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now);
    let next = now.max(inner.clock + TimeDelta::milliseconds(1));
    inner.clock = next;
    next
}

fn missing(id: Uuid) -> ApiError {
    ApiError::not_found(format!("no entry {}", atom::urn(&id)))
}

fn io_error(path: &FsPath, e: io::Error) -> ApiError {
    ApiError::new(Code::EUpstream, format!("store write failed for {}: {e}", path.display()))
        .with_status(StatusCode::INTERNAL_SERVER_ERROR)
}

fn write_atomically(path: &FsPath, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("xml.tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

type Reg = State<Arc<Registry>>;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/registry/{collection}", get(get_feed).post(create_entry))
        .route("/registry/{collection}/{id}", get(get_entry).put(update_entry).delete(delete_entry))
        .fallback(error::not_found)
        .method_not_allowed_fallback(error::method_not_allowed)
        .with_state(registry)
}

fn xml(status: StatusCode, content_type: &'static str, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static(content_type))], body).into_response()
}

fn body_entry(body: &Bytes) -> Result<Entry, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    Ok(atom::parse_entry(text)?)
}

fn entry_path(p: Result<Path<(String, String)>, PathRejection>) -> Result<(Collection, Uuid), ApiError> {
    let Path((c, id)) = p?;
    let c: Collection = c.parse()?;
    let id = atom::parse_id(&id).ok_or_else(|| ApiError::not_found(format!("no entry {id:?}")))?;
    Ok((c, id))
}

async fn get_feed(State(r): Reg, c: Result<Path<String>, PathRejection>) -> Result<Response, ApiError> {
    let Path(c) = c?;
    let c: Collection = c.parse()?;
    Ok(xml(StatusCode::OK, FEED_TYPE, atom::feed_xml(c, &r.feed(c))))
}

async fn create_entry(
    State(r): Reg,
    c: Result<Path<String>, PathRejection>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let Path(c) = c?;
    let c: Collection = c.parse()?;
    let entry = r.create(c, body_entry(&body)?)?;
    let id = entry.id.expect("created entries have ids");
    let path = format!("/registry/{c}/{id}");
    let location = match headers.get(header::HOST).and_then(|h| h.to_str().ok()) {
        Some(host) => format!("http://{host}{path}"),
        None => path,
    };
    let mut resp = xml(StatusCode::CREATED, ENTRY_TYPE, entry.to_xml(c));
    if let Ok(v) = HeaderValue::from_str(&location) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    Ok(resp)
}

async fn get_entry(State(r): Reg, p: Result<Path<(String, String)>, PathRejection>) -> Result<Response, ApiError> {
    let (c, id) = entry_path(p)?;
    Ok(xml(StatusCode::OK, ENTRY_TYPE, r.get(c, id)?.to_xml(c)))
}

async fn update_entry(
    State(r): Reg,
    p: Result<Path<(String, String)>, PathRejection>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let (c, id) = entry_path(p)?;
    let entry = r.update(c, id, body_entry(&body)?)?;
    Ok(xml(StatusCode::OK, ENTRY_TYPE, entry.to_xml(c)))
}

async fn delete_entry(State(r): Reg, p: Result<Path<(String, String)>, PathRejection>) -> Result<StatusCode, ApiError> {
    let (c, id) = entry_path(p)?;
    r.delete(c, id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rulemesh_core::DialectId;

    fn engine(title: &str) -> Entry {
        Entry::engine(title, "http://127.0.0.1:1", DialectId::DrlMini, None)
    }

    #[test]
    fn crud_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let r = Registry::open(dir.path()).unwrap();
        let a = r.create(Collection::Engines, engine("a")).unwrap();
        let b = r.create(Collection::Engines, engine("b")).unwrap();
        assert_ne!(a.id, b.id);
        assert!(b.updated > a.updated);
        let a2 = r.update(Collection::Engines, a.id.unwrap(), engine("a2")).unwrap();
        assert!(a2.updated > b.updated);
        assert_eq!(a2.published, a.published);
        let titles: Vec<String> = r.feed(Collection::Engines).into_iter().map(|e| e.title).collect();
        assert_eq!(titles, ["a2", "b"]);
        r.delete(Collection::Engines, b.id.unwrap()).unwrap();
        assert_eq!(r.get(Collection::Engines, b.id.unwrap()).unwrap_err().code(), Code::ENotFound);

        let reloaded = Registry::open(dir.path()).unwrap();
        assert_eq!(reloaded.feed(Collection::Engines), r.feed(Collection::Engines));
        let c = reloaded.create(Collection::Engines, engine("c")).unwrap();
        assert!(c.updated > a2.updated);
    }

    #[test]
    fn foreign_id_is_rejected() {
        let r = Registry::in_memory();
        let a = r.create(Collection::Engines, engine("a")).unwrap();
        let mut other = engine("x");
        other.id = Some(Uuid::new_v4());
        assert_eq!(r.update(Collection::Engines, a.id.unwrap(), other.clone()).unwrap_err().code(), Code::EBadRequest);
        assert_eq!(r.create(Collection::Engines, other).unwrap_err().code(), Code::EBadRequest);
    }
}
