//! Route table and handlers.
//!
//! Mutating session routes honour an `Idempotency-Key` header: a repeated
//! request with the same key and body gets the stored reply without being
//! applied again, and the same key with a different body is a conflict.
//! Requests for one session are serialised by that session's lock; session
//! work runs on the blocking pool because service transports block.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value as Json_};

use pfg_core::catalog::Origin;
use pfg_core::extractor::DocumentFormat;
use pfg_core::ingest::{ingest_document, source_id_for};
use pfg_core::session::{ExportFormat, FeedbackEvent, Mode, PasteEvent, PasteOrigin, PastedCell, Session};
use pfg_core::services::ServiceRegistry;
use pfg_core::SourceId;

use crate::error::ApiError;
use crate::{format_for, App, SessionSlot, StoredReply, SCHEMA_VERSION};

type AppState = Arc<App>;
type Reply = Result<(StatusCode, Json_), ApiError>;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/paste", post(paste))
        .route("/sessions/{id}/suggestions", get(suggestions))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/mode", post(set_mode))
        .route("/sessions/{id}/rows/{row}/provenance", get(provenance))
        .route("/sessions/{id}/columns/{idx}/label", post(label))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/log", get(session_log))
        .route("/sessions/{id}/initial-catalog", get(initial_catalog))
        .route("/sources", post(upload_source))
        .route("/catalog", get(catalog))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async { ApiError::bad_request("method not allowed on this route") })
        .with_state(app)
}

fn stamp(mut body: Json_) -> Json_ {
    if let Json_::Object(m) = &mut body {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    body
}

fn respond(r: Reply) -> Response {
    match r {
        Ok((status, body)) => (status, Json(stamp(body))).into_response(),
        Err(e) => e.into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_index(what: &str, raw: &str) -> Result<usize, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("{what} must be a non-negative integer, got `{raw}`")))
}

fn idempotency_key(headers: &HeaderMap) -> Result<Option<String>, ApiError> {
    headers
        .get("idempotency-key")
        .map(|v| {
            v.to_str()
                .map(str::to_string)
                .map_err(|_| ApiError::bad_request("Idempotency-Key must be visible ASCII"))
        })
        .transpose()
}

fn fingerprint(route: &str, body: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    route.hash(&mut h);
    body.hash(&mut h);
    h.finish()
}

fn replay_stored(stored: &StoredReply, fp: u64) -> Reply {
    if stored.fingerprint != fp {
        return Err(ApiError::conflict("Idempotency-Key was already used for a different request"));
    }
    let status = StatusCode::from_u16(stored.status).unwrap_or(StatusCode::OK);
    Ok((status, stored.body.clone()))
}

fn slot(app: &App, id: &str) -> Result<Arc<tokio::sync::Mutex<SessionSlot>>, ApiError> {
    app.session(id)
        .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r,
        Err(e) => {
            log::error!("request handler failed: {e}");
            Err(ApiError::unprocessable("the request could not be completed")
                .with_detail(json!({ "reason": "internal failure" })))
        }
    }
}

/// Runs `f` on a session under its lock, honouring the idempotency key.
async fn with_session<F>(app: AppState, id: String, key: Option<String>, fp: u64, f: F) -> Reply
where
    F: FnOnce(&mut Session, &ServiceRegistry) -> Reply + Send + 'static,
{
    let slot = slot(&app, &id)?;
    let mut guard = slot.lock_owned().await;
    if let Some(stored) = key.as_ref().and_then(|k| guard.replies.get(k)) {
        return replay_stored(stored, fp);
    }
    let services = app.services.clone();
    blocking(move || {
        let out = f(&mut guard.session, &services);
        if let (Some(k), Ok((status, body))) = (key, &out) {
            let stored = StoredReply {
                fingerprint: fp,
                status: status.as_u16(),
                body: body.clone(),
            };
            guard.replies.insert(k, stored);
        }
        out
    })
    .await
}

/// Read-only access to a session.
async fn read_session<T: Send + 'static>(
    app: &AppState,
    id: &str,
    f: impl FnOnce(&Session) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let slot = slot(app, id)?;
    let guard = slot.lock_owned().await;
    blocking(move || f(&guard.session)).await
}

fn json_of<T: serde::Serialize>(v: &T) -> Json_ {
    serde_json::to_value(v).expect("payloads serialize")
}

fn grid_json(s: &Session) -> Json_ {
    json_of(&s.state.output)
}

// ---- sessions ---------------------------------------------------------

async fn create_session(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let fp = fingerprint("create", &body);
        let mut replies = app.replies.lock().await;
        if let Some(stored) = key.as_ref().and_then(|k| replies.get(&format!("session:{k}"))) {
            return replay_stored(stored, fp);
        }
        let id = app.create_session();
        let out = (StatusCode::CREATED, json!({ "session_id": id, "mode": Mode::Import }));
        if let Some(k) = key {
            replies.insert(
                format!("session:{k}"),
                StoredReply {
                    fingerprint: fp,
                    status: out.0.as_u16(),
                    body: out.1.clone(),
                },
            );
        }
        Ok(out)
    };
    respond(r.await)
}

async fn session_state(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let sid = id.clone();
    let r = read_session(&app, &id, move |s| {
        Ok((
            StatusCode::OK,
            json!({
                "session_id": sid,
                "mode": s.state.mode,
                "grid": grid_json(s),
                "active_query": s.state.active_query,
                "tabs": s.state.tabs.keys().collect::<Vec<_>>(),
                "diagnostics": s.state.diagnostics,
            }),
        ))
    })
    .await;
    respond(r)
}

#[derive(Deserialize)]
struct PasteBody {
    cells: Vec<PastedCell>,
    #[serde(default = "unattributed")]
    origin: PasteOrigin,
    #[serde(default)]
    timestamp: u64,
}

fn unattributed() -> PasteOrigin {
    PasteOrigin::Unattributed
}

async fn paste(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let req: PasteBody = parse_body(&body)?;
        let event = PasteEvent {
            cells: req.cells,
            origin: req.origin,
            timestamp: req.timestamp,
        };
        with_session(app, id, key, fingerprint("paste", &body), move |s, services| {
            let out = s.handle_paste(services, event)?;
            Ok((
                StatusCode::OK,
                json!({
                    "mode": out.mode,
                    "mode_changed": out.mode_changed,
                    "suggestions": out.suggestions,
                    "diagnostics": out.diagnostics,
                    "grid": grid_json(s),
                }),
            ))
        })
        .await
    };
    respond(r.await)
}

async fn suggestions(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let r = read_session(&app, &id, |s| {
        Ok((
            StatusCode::OK,
            json!({ "mode": s.state.mode, "suggestions": s.state.suggestions }),
        ))
    })
    .await;
    respond(r)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FeedbackBody {
    Batch { events: Vec<FeedbackEvent> },
    One(FeedbackEvent),
}

async fn feedback(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let events = match parse_body::<FeedbackBody>(&body)? {
            FeedbackBody::Batch { events } => events,
            FeedbackBody::One(e) => vec![e],
        };
        with_session(app, id, key, fingerprint("feedback", &body), move |s, services| {
            let suggestions = s.apply_feedback_batch(services, events)?;
            Ok((
                StatusCode::OK,
                json!({
                    "mode": s.state.mode,
                    "suggestions": suggestions,
                    "diagnostics": s.state.diagnostics,
                    "grid": grid_json(s),
                }),
            ))
        })
        .await
    };
    respond(r.await)
}

#[derive(Deserialize)]
struct ModeBody {
    mode: Mode,
}

async fn set_mode(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let req: ModeBody = parse_body(&body)?;
        with_session(app, id, key, fingerprint("mode", &body), move |s, services| {
            s.set_mode(services, req.mode)?;
            Ok((
                StatusCode::OK,
                json!({ "mode": s.state.mode, "suggestions": s.state.suggestions }),
            ))
        })
        .await
    };
    respond(r.await)
}

async fn provenance(State(app): State<AppState>, Path((id, row)): Path<(String, String)>) -> Response {
    let r = async {
        let row = parse_index("row", &row)?;
        read_session(&app, &id, move |s| {
            let expr = s.row_provenance(row)?;
            Ok((
                StatusCode::OK,
                json!({
                    "row": row,
                    "cells": s.state.output.rows[row].cells,
                    "expr": expr,
                    "graph": expr.to_graph(),
                }),
            ))
        })
        .await
    };
    respond(r.await)
}

#[derive(Deserialize)]
struct LabelBody {
    name: String,
    #[serde(default, alias = "type")]
    semantic_type: Option<String>,
}

async fn label(
    State(app): State<AppState>,
    Path((id, idx)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let column = parse_index("column", &idx)?;
        let req: LabelBody = parse_body(&body)?;
        let fp = fingerprint(&format!("label:{column}"), &body);
        with_session(app, id, key, fp, move |s, services| {
            s.set_column_label(services, column, &req.name, req.semantic_type.as_deref())?;
            let col = &s.state.output.columns[column];
            Ok((
                StatusCode::OK,
                json!({
                    "column": column,
                    "label": col.label,
                    "semantic_type": col.semantic_type,
                    "suggestions": s.state.suggestions,
                }),
            ))
        })
        .await
    };
    respond(r.await)
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Response {
    let r = async {
        let format: ExportFormat = q
            .format
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("`format` is required: csv, json or geojson"))?
            .parse()
            .map_err(ApiError::from)?;
        let bytes = read_session(&app, &id, move |s| Ok(s.export(format)?)).await?;
        Ok::<_, ApiError>((format, bytes))
    };
    match r.await {
        Ok((format, bytes)) => {
            let ct = HeaderValue::from_static(format.content_type());
            (StatusCode::OK, [(header::CONTENT_TYPE, ct)], bytes).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn session_log(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match read_session(&app, &id, |s| Ok(s.log_ndjson())).await {
        Ok(text) => {
            let ct = HeaderValue::from_static("application/x-ndjson");
            (StatusCode::OK, [(header::CONTENT_TYPE, ct)], text).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn initial_catalog(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match read_session(&app, &id, |s| Ok(s.initial_catalog().to_json())).await {
        Ok(text) => {
            let ct = HeaderValue::from_static("application/json");
            (StatusCode::OK, [(header::CONTENT_TYPE, ct)], text).into_response()
        }
        Err(e) => e.into_response(),
    }
}

// ---- catalog ----------------------------------------------------------

#[derive(Deserialize)]
struct SourceBody {
    name: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    format: Option<String>,
    content: String,
}

async fn upload_source(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let r = async {
        let key = idempotency_key(&headers)?;
        let fp = fingerprint("source", &body);
        let mut replies = app.replies.lock().await;
        if let Some(stored) = key.as_ref().and_then(|k| replies.get(&format!("source:{k}"))) {
            return replay_stored(stored, fp);
        }
        let req: SourceBody = parse_body(&body)?;
        let format: DocumentFormat = match &req.format {
            Some(f) => f.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?,
            None => format_for(&req.name)
                .ok_or_else(|| ApiError::bad_request(format!("cannot tell the format of `{}`", req.name)))?,
        };
        let id = match &req.id {
            Some(id) => SourceId::new(id.clone()),
            None => source_id_for(&req.name),
        };
        let tau = app.config.tau_type;
        let app2 = app.clone();
        let (id, content, out) = blocking(move || {
            let mut catalog = app2.catalog_mut();
            let origin = Origin::File { path: req.name.clone() };
            let id = ingest_document(&mut catalog, id, format, req.content.as_bytes(), origin, tau)?;
            let content = catalog.documents[&id].content.clone();
            let out = json!({
                "source": catalog.source(&id),
                "rows": catalog.table(&id).map_or(0, |t| t.len()),
            });
            Ok((id, content, out))
        })
        .await?;
        if let Err(e) = app.persist() {
            log::warn!("catalog not saved: {e}");
        }
        // sessions started earlier see the new source too
        for slot in app.all_sessions() {
            let mut guard = slot.lock_owned().await;
            let (id, content, services) = (id.clone(), content.clone(), app.services.clone());
            blocking(move || {
                if let Err(e) = guard.session.publish_source(&services, id.clone(), format, &content) {
                    log::warn!("`{id}` not published to a session: {e}");
                }
                Ok(())
            })
            .await?;
        }
        if let Some(k) = key {
            replies.insert(
                format!("source:{k}"),
                StoredReply {
                    fingerprint: fp,
                    status: StatusCode::CREATED.as_u16(),
                    body: out.clone(),
                },
            );
        }
        Ok((StatusCode::CREATED, out))
    };
    respond(r.await)
}

async fn catalog(State(app): State<AppState>) -> Response {
    let c = app.catalog();
    let sources: Vec<Json_> = c
        .sources
        .values()
        .map(|d| {
            json!({
                "descriptor": d,
                "rows": c.table(&d.id).map(|t| t.len()),
                "service": c.service(&d.id),
            })
        })
        .collect();
    let types: Vec<Json_> = c
        .types
        .values()
        .map(|t| json!({ "id": t.type_id, "n_train": t.n_train }))
        .collect();
    let edges: Vec<Json_> = c
        .graph
        .edges
        .values()
        .map(|e| json!({ "id": e.id, "kind": e.kind, "cost": e.cost, "origin": e.origin, "endpoints": e.endpoints }))
        .collect();
    let body = json!({
        "sources": sources,
        "types": types,
        "graph": { "config": c.graph.config, "nodes": c.graph.nodes, "edges": edges },
    });
    respond(Ok((StatusCode::OK, body)))
}
