//! Loading type definitions and service declarations from JSON, and table
//! files that back in-process services.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttributeSpec, Catalog, CatalogError, FanOut, Origin, ServiceSignature, SourceDescriptor, SourceKind};
use crate::services::{MockTransport, ServiceRegistry, Transport};
use crate::typist::{learn_type, TypistError};
use crate::SourceId;

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{what}: {source}")]
    Json {
        what: String,
        source: serde_json::Error,
    },
    #[error("service table for `{service}`: {reason}")]
    Table { service: String, reason: String },
    #[error("service `{0}` has neither a table nor a url")]
    NoTransport(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Typist(#[from] TypistError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub examples: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypesFile {
    #[serde(default)]
    pub types: Vec<TypeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type", default)]
    pub semantic_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    pub inputs: Vec<ParamSpec>,
    pub outputs: Vec<ParamSpec>,
    #[serde(default = "many")]
    pub fan_out: FanOut,
    /// CSV file, relative to the declaring file, answering calls in process.
    #[serde(default)]
    pub table: Option<String>,
    /// Remote endpoint; takes precedence over `table` when both are given.
    #[serde(default)]
    pub url: Option<String>,
}

fn many() -> FanOut {
    FanOut::Many
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ServicesFile {
    #[serde(default)]
    pub services: Vec<ServiceSpec>,
}

impl ServiceSpec {
    pub fn signature(&self) -> ServiceSignature {
        let attrs = |ps: &[ParamSpec]| {
            ps.iter()
                .enumerate()
                .map(|(i, p)| AttributeSpec::new(p.name.clone(), p.semantic_type.as_deref(), i))
                .collect()
        };
        ServiceSignature {
            inputs: attrs(&self.inputs),
            outputs: attrs(&self.outputs),
            fan_out: self.fan_out,
        }
    }
}

fn read(path: &Path) -> Result<String, BootstrapError> {
    std::fs::read_to_string(path).map_err(|source| BootstrapError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_types(json: &str) -> Result<TypesFile, BootstrapError> {
    serde_json::from_str(json).map_err(|source| BootstrapError::Json {
        what: "types file".into(),
        source,
    })
}

pub fn parse_services(json: &str) -> Result<ServicesFile, BootstrapError> {
    serde_json::from_str(json).map_err(|source| BootstrapError::Json {
        what: "services file".into(),
        source,
    })
}

/// Learns and registers each declared type the catalog does not know yet.
/// Known types keep whatever they have learned since.
pub fn register_types(catalog: &mut Catalog, types: &TypesFile) -> Result<(), BootstrapError> {
    for t in &types.types {
        if catalog.type_model(&t.name.as_str().into()).is_none() {
            catalog.register_type(learn_type(t.name.as_str(), &t.examples)?);
        }
    }
    Ok(())
}

/// A lookup transport over a CSV table whose header names the service's
/// inputs and outputs; other columns are ignored.
pub fn table_transport(spec: &ServiceSpec, csv_text: &str) -> Result<MockTransport, BootstrapError> {
    let err = |reason: String| BootstrapError::Table {
        service: spec.id.clone(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let positions = spec
        .inputs
        .iter()
        .chain(&spec.outputs)
        .map(|p| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(&p.name))
                .ok_or_else(|| err(format!("no column `{}`", p.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        rows.push(
            positions
                .iter()
                .map(|&i| rec.get(i).filter(|v| !v.is_empty()).map(str::to_string))
                .collect(),
        );
    }
    Ok(MockTransport::new(spec.inputs.len(), rows))
}

/// Registers each declared service in the catalog, unless a catalog loaded
/// from disk already has it, and gives it a client.
/// `remote` builds the transport for services with a url; table-backed
/// services resolve their file against `base`. Output values are validated
/// against the catalog's models of the declared output types.
pub fn register_services(
    catalog: &mut Catalog,
    registry: &mut ServiceRegistry,
    services: &ServicesFile,
    base: &Path,
    remote: &dyn Fn(&ServiceSpec, &str) -> Arc<dyn Transport>,
) -> Result<(), BootstrapError> {
    for spec in &services.services {
        let transport: Arc<dyn Transport> = match (&spec.url, &spec.table) {
            (Some(url), _) => remote(spec, url),
            (None, Some(table)) => Arc::new(table_transport(spec, &read(&base.join(table))?)?),
            (None, None) => return Err(BootstrapError::NoTransport(spec.id.clone())),
        };
        let id = SourceId::new(spec.id.clone());
        let signature = spec.signature();
        if catalog.service(&id) != Some(&signature) {
            let descriptor = SourceDescriptor::new(id.clone(), SourceKind::Service, Vec::new(), Origin::Declared);
            catalog.register_service(signature.clone(), descriptor)?;
        }
        let validators = signature
            .outputs
            .iter()
            .map(|o| o.semantic_type.as_ref().and_then(|t| catalog.type_model(t).cloned()))
            .collect();
        let client = registry.client(id, signature, transport).with_validators(validators);
        registry.insert(client);
    }
    Ok(())
}

/// A catalog and service registry built from a fixture directory holding
/// `types.json` and `services.json`. Either file may be absent.
pub fn load_dir(
    catalog: &mut Catalog,
    registry: &mut ServiceRegistry,
    dir: &Path,
    remote: &dyn Fn(&ServiceSpec, &str) -> Arc<dyn Transport>,
) -> Result<(), BootstrapError> {
    let types = dir.join("types.json");
    if types.exists() {
        register_types(catalog, &parse_types(&read(&types)?)?)?;
    }
    let services = dir.join("services.json");
    if services.exists() {
        register_services(catalog, registry, &parse_services(&read(&services)?)?, dir, remote)?;
    }
    Ok(())
}
