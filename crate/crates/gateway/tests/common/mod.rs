#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use pfg_gateway::{router, App, Config};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

pub fn config() -> Config {
    Config {
        fixtures: fixtures(),
        ..Config::default()
    }
}

/// Serves `app` on an ephemeral port from a background runtime.
pub fn serve(app: Arc<App>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(app)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

pub struct Api {
    pub base: String,
    pub http: Client,
}

#[derive(Debug)]
pub struct Resp {
    pub status: u16,
    pub body: Value,
    pub text: String,
    pub content_type: String,
}

impl Api {
    pub fn start() -> Api {
        Api::with_config(config())
    }

    pub fn with_config(config: Config) -> Api {
        let app = App::from_config(config).unwrap();
        Api {
            base: serve(app),
            http: Client::new(),
        }
    }

    fn finish(r: reqwest::blocking::Response) -> Resp {
        let status = r.status().as_u16();
        let content_type = r
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        let text = r.text().unwrap();
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Resp {
            status,
            body,
            text,
            content_type,
        }
    }

    pub fn get(&self, path: &str) -> Resp {
        Self::finish(self.http.get(format!("{}{path}", self.base)).send().unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> Resp {
        self.post_keyed(path, body, None)
    }

    pub fn post_keyed(&self, path: &str, body: &Value, key: Option<&str>) -> Resp {
        let mut req = self.http.post(format!("{}{path}", self.base)).json(body);
        if let Some(k) = key {
            req = req.header("Idempotency-Key", k);
        }
        Self::finish(req.send().unwrap())
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Resp {
        let req = self
            .http
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body.to_string());
        Self::finish(req.send().unwrap())
    }

    pub fn upload(&self, name: &str) -> Resp {
        self.post("/sources", &json!({ "name": name, "content": fixture(name) }))
    }

    pub fn new_session(&self) -> String {
        let r = self.post("/sessions", &json!({}));
        assert_eq!(r.status, 201, "{}", r.text);
        r.body["session_id"].as_str().unwrap().to_string()
    }
}

/// Rows of `shelters.html` as the browser would copy them.
pub fn shelter_rows(names: &[&str]) -> Vec<Vec<String>> {
    let doc = fixture("shelters.html");
    let model = pfg_core::extractor::infer_document_model(doc.as_bytes(), pfg_core::extractor::DocumentFormat::Html)
        .unwrap();
    names
        .iter()
        .map(|n| {
            model
                .records
                .iter()
                .map(|r| r.fields.iter().map(|f| f.clone().unwrap_or_default()).collect::<Vec<_>>())
                .find(|r| r[0] == *n)
                .unwrap()
        })
        .collect()
}

pub fn cells(rows: &[Vec<String>], row: usize, col: usize) -> Value {
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            out.push(json!({ "row": row + i, "column": col + j, "value": v }));
        }
    }
    Value::Array(out)
}

pub fn paste_body(source: &str, rows: &[Vec<String>], row: usize, col: usize) -> Value {
    json!({ "cells": cells(rows, row, col), "origin": { "type": "source", "source": source } })
}

/// First suggestion whose query goes through `node`.
pub fn through<'a>(suggestions: &'a Value, node: &str) -> Option<&'a Value> {
    suggestions.as_array()?.iter().find(|s| {
        s["backing"]["type"] == "query"
            && s["backing"]["query"]["nodes"]
                .as_array()
                .is_some_and(|n| n.iter().any(|x| x == node))
    })
}

pub fn of_kind<'a>(suggestions: &'a Value, kind: &str) -> Vec<&'a Value> {
    suggestions
        .as_array()
        .map(|a| a.iter().filter(|s| s["kind"] == kind).collect())
        .unwrap_or_default()
}
