//! HTTP gateway for the integration workbench: sessions, document
//! ingestion, suggestions, feedback, tuple explanation and export.

pub mod config;
pub mod error;
pub mod routes;
pub mod transport;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use pfg_core::bootstrap::{load_dir, BootstrapError, ServiceSpec};
use pfg_core::catalog::{load_catalog, save_catalog, Catalog, CatalogError, Origin};
use pfg_core::extractor::DocumentFormat;
use pfg_core::ingest::{ingest_document, source_id_for, IngestError};
use pfg_core::services::{ServiceRegistry, Transport, TransportError};
use pfg_core::session::Session;
use pfg_core::SourceId;

pub use config::Config;
pub use error::{ApiError, ErrorCode};
pub use routes::router;

/// Version stamped on every JSON payload the gateway emits.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot tell the format of `{0}`; pass one of csv, tsv, html")]
    UnknownFormat(String),
    #[error("service `{0}`: {1}")]
    Transport(String, TransportError),
}

/// A reply kept for an idempotency key, with a digest of the request that
/// produced it.
#[derive(Clone, Debug)]
pub(crate) struct StoredReply {
    pub fingerprint: u64,
    pub status: u16,
    pub body: serde_json::Value,
}

pub(crate) struct SessionSlot {
    pub session: Session,
    pub replies: HashMap<String, StoredReply>,
}

pub struct App {
    pub config: Config,
    pub services: Arc<ServiceRegistry>,
    catalog: RwLock<Catalog>,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<SessionSlot>>>>,
    replies: tokio::sync::Mutex<HashMap<String, StoredReply>>,
    next_session: AtomicU64,
}

/// Format from a file name's extension.
pub fn format_for(name: &str) -> Option<DocumentFormat> {
    let ext = Path::new(name).extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "csv" => Some(DocumentFormat::Csv),
        "tsv" | "tab" => Some(DocumentFormat::Tsv),
        "html" | "htm" => Some(DocumentFormat::Html),
        _ => None,
    }
}

/// Reads a document and registers it as a source named after the file.
pub fn ingest_file(
    catalog: &mut Catalog,
    path: &Path,
    format: Option<DocumentFormat>,
    type_threshold: f64,
) -> Result<SourceId, GatewayError> {
    let name = path.to_string_lossy().to_string();
    let format = format
        .or_else(|| format_for(&name))
        .ok_or_else(|| GatewayError::UnknownFormat(name.clone()))?;
    let content = std::fs::read(path).map_err(|source| GatewayError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = Origin::File { path: name.clone() };
    Ok(ingest_document(catalog, source_id_for(&name), format, &content, origin, type_threshold)?)
}

/// The catalog named in the config (if the file exists) or an empty one,
/// with the fixture types and services added and the config's graph
/// parameters applied. Remote services get an HTTP transport.
pub fn bootstrap(config: &Config) -> Result<(Catalog, ServiceRegistry), GatewayError> {
    let mut catalog = match &config.catalog {
        Some(p) if p.exists() => load_catalog(p)?,
        _ => Catalog::new(config.graph_config()),
    };
    catalog.graph.config = config.graph_config();
    let mut registry = ServiceRegistry::new();
    let timeout = Duration::from_millis(config.service_timeout_ms);
    let failed: Mutex<Option<GatewayError>> = Mutex::new(None);
    let remote = |spec: &ServiceSpec, url: &str| -> Arc<dyn Transport> {
        match transport::HttpTransport::new(spec.id.clone(), url, timeout) {
            Ok(t) => Arc::new(t),
            Err(e) => {
                *failed.lock().unwrap() = Some(GatewayError::Transport(spec.id.clone(), e.clone()));
                Arc::new(Broken(e))
            }
        }
    };
    load_dir(&mut catalog, &mut registry, &config.fixtures, &remote)?;
    if let Some(e) = failed.into_inner().unwrap() {
        return Err(e);
    }
    catalog.refresh_graph();
    Ok((catalog, registry))
}

struct Broken(TransportError);

impl Transport for Broken {
    fn invoke(&self, _: &[pfg_core::Value]) -> Result<Vec<Vec<pfg_core::Value>>, TransportError> {
        Err(self.0.clone())
    }
}

impl App {
    pub fn new(config: Config, catalog: Catalog, services: ServiceRegistry) -> Arc<App> {
        Arc::new(App {
            config,
            services: Arc::new(services),
            catalog: RwLock::new(catalog),
            sessions: Mutex::new(HashMap::new()),
            replies: tokio::sync::Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    /// Builds the application from its config; see [`bootstrap`].
    pub fn from_config(config: Config) -> Result<Arc<App>, GatewayError> {
        let (catalog, services) = bootstrap(&config)?;
        Ok(App::new(config, catalog, services))
    }

    pub fn catalog(&self) -> std::sync::RwLockReadGuard<'_, Catalog> {
        self.catalog.read().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn catalog_mut(&self) -> std::sync::RwLockWriteGuard<'_, Catalog> {
        self.catalog.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Writes the shared catalog to the configured file, if any.
    pub fn persist(&self) -> Result<(), GatewayError> {
        if let Some(p) = &self.config.catalog {
            save_catalog(&self.catalog(), p)?;
        }
        Ok(())
    }

    pub(crate) fn create_session(&self) -> String {
        let n = self.next_session.fetch_add(1, Ordering::SeqCst);
        let id = format!("s{n}");
        let session = Session::new(self.catalog().clone(), self.config.session_config());
        let slot = SessionSlot {
            session,
            replies: HashMap::new(),
        };
        self.sessions_map().insert(id.clone(), Arc::new(tokio::sync::Mutex::new(slot)));
        id
    }

    fn sessions_map(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<tokio::sync::Mutex<SessionSlot>>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn session(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<SessionSlot>>> {
        self.sessions_map().get(id).cloned()
    }

    pub(crate) fn all_sessions(&self) -> Vec<Arc<tokio::sync::Mutex<SessionSlot>>> {
        let map = self.sessions_map();
        let mut ids: Vec<&String> = map.keys().collect();
        ids.sort();
        ids.into_iter().map(|k| map[k].clone()).collect()
    }
}
