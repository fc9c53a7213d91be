mod common;

use serde_json::{json, Value};

use common::{of_kind, paste_body, shelter_rows, through, Api};

fn two_rows() -> Vec<Vec<String>> {
    shelter_rows(&["Margate Middle School", "Western High School"])
}

/// Server with both fixture documents uploaded and one session holding
/// the full shelter list.
fn imported() -> (Api, String) {
    let api = Api::start();
    assert_eq!(api.upload("shelters.html").status, 201);
    assert_eq!(api.upload("contacts.csv").status, 201);
    let sid = api.new_session();
    let out = api.post(&format!("/sessions/{sid}/paste"), &paste_body("shelters", &two_rows(), 0, 0));
    assert_eq!(out.status, 200, "{}", out.text);
    let rc = of_kind(&out.body["suggestions"], "row-completion")[0]["id"].clone();
    let fb = api.post(&format!("/sessions/{sid}/feedback"), &json!({ "suggestion": rc, "verdict": "accept" }));
    assert_eq!(fb.status, 200, "{}", fb.text);
    (api, sid)
}

fn accept_through(api: &Api, sid: &str, node: &str) -> Value {
    let s = api.get(&format!("/sessions/{sid}/suggestions"));
    let id = through(&s.body["suggestions"], node).unwrap_or_else(|| panic!("no {node}"))["id"].clone();
    let r = api.post(&format!("/sessions/{sid}/feedback"), &json!({ "suggestion": id, "verdict": "accept" }));
    assert_eq!(r.status, 200, "{}", r.text);
    r.body
}

#[test]
fn every_json_payload_carries_the_schema_version() {
    let api = Api::start();
    let sid = api.new_session();
    for path in [format!("/sessions/{sid}"), format!("/sessions/{sid}/suggestions"), "/catalog".into()] {
        let r = api.get(&path);
        assert_eq!(r.status, 200);
        assert_eq!(r.body["schema_version"], 1, "{path}");
    }
    let err = api.get("/sessions/nope");
    assert_eq!(err.body["schema_version"], 1);
}

#[test]
fn errors_use_the_envelope_and_their_status() {
    let api = Api::start();
    let sid = api.new_session();

    let r = api.get("/sessions/s999");
    assert_eq!(r.status, 404);
    assert_eq!(r.body["error"]["code"], "not_found");
    assert!(r.body["error"]["message"].is_string());

    assert_eq!(api.get("/no/such/route").status, 404);

    let r = api.post_raw(&format!("/sessions/{sid}/paste"), "{not json");
    assert_eq!(r.status, 400);
    assert_eq!(r.body["error"]["code"], "bad_request");

    let r = api.post(&format!("/sessions/{sid}/paste"), &json!({ "cells": [] }));
    assert_eq!(r.status, 400);

    let r = api.post(
        &format!("/sessions/{sid}/feedback"),
        &json!({ "suggestion": "rows:nowhere:0", "verdict": "accept" }),
    );
    assert_eq!(r.status, 404);

    let r = api.get(&format!("/sessions/{sid}/rows/abc/provenance"));
    assert_eq!(r.status, 400);
    let r = api.get(&format!("/sessions/{sid}/rows/0/provenance"));
    assert_eq!(r.status, 404);
}

#[test]
fn pasting_two_rows_offers_the_list_and_a_zip_column() {
    let api = Api::start();
    api.upload("shelters.html");
    let sid = api.new_session();
    let out = api.post(&format!("/sessions/{sid}/paste"), &paste_body("shelters", &two_rows(), 0, 0));
    assert_eq!(out.status, 200, "{}", out.text);
    assert_eq!(out.body["mode"], "import");
    let rc = of_kind(&out.body["suggestions"], "row-completion");
    assert_eq!(rc.len(), 1);
    assert_eq!(rc[0]["preview"]["total_rows"], 10);

    let s = api.get(&format!("/sessions/{sid}/suggestions"));
    let zip = through(&s.body["suggestions"], "zipcodes").expect("zip column offered");
    assert_eq!(zip["kind"], "column-completion");
    assert_eq!(zip["preview"]["columns"].as_array().unwrap().last().unwrap(), "Zip");
}

#[test]
fn repeated_idempotency_key_replays_the_reply() {
    let api = Api::start();
    api.upload("shelters.html");
    let sid = api.new_session();
    let path = format!("/sessions/{sid}/paste");
    let body = paste_body("shelters", &two_rows(), 0, 0);
    let first = api.post_keyed(&path, &body, Some("k1"));
    let again = api.post_keyed(&path, &body, Some("k1"));
    assert_eq!(first.status, 200);
    assert_eq!(again.status, first.status);
    assert_eq!(again.body, first.body);
    let log = api.get(&format!("/sessions/{sid}/log"));
    assert_eq!(log.text.lines().count(), 1);
    assert!(log.content_type.starts_with("application/x-ndjson"));

    let other = paste_body("shelters", &shelter_rows(&["Monarch High School"]), 2, 0);
    let clash = api.post_keyed(&path, &other, Some("k1"));
    assert_eq!(clash.status, 409);
    assert_eq!(clash.body["error"]["code"], "conflict");

    let a = api.post_keyed("/sessions", &json!({}), Some("new"));
    let b = api.post_keyed("/sessions", &json!({}), Some("new"));
    assert_eq!(a.body["session_id"], b.body["session_id"]);
}

#[test]
fn explained_row_leads_back_to_its_source_and_service() {
    let (api, sid) = imported();
    let out = accept_through(&api, &sid, "zipcodes");
    let labels: Vec<&str> = out["grid"]["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["Name", "Street", "City", "Zip"]);
    assert_eq!(out["mode"], "integration");

    let p = api.get(&format!("/sessions/{sid}/rows/0/provenance"));
    assert_eq!(p.status, 200, "{}", p.text);
    let nodes = p.body["graph"]["nodes"].as_array().unwrap();
    let id_of = |kind: &str, label: &str| {
        nodes
            .iter()
            .find(|n| n["kind"] == kind && n["label"].as_str().is_some_and(|l| l.contains(label)))
            .map(|n| n["id"].clone())
    };
    let leaf = id_of("leaf", "shelters").expect("leaf for the shelters row");
    let call = id_of("service_call", "zipcodes").expect("zip service call");
    let edges = p.body["graph"]["edges"].as_array().unwrap();
    assert!(
        edges.iter().any(|e| e[0] == leaf && e[1] == call),
        "{}",
        p.text
    );
    assert_eq!(p.body["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn labels_rename_columns_once() {
    let (api, sid) = imported();
    let r = api.post(&format!("/sessions/{sid}/columns/2/label"), &json!({ "name": "Town" }));
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.body["label"], "Town");
    let dup = api.post(&format!("/sessions/{sid}/columns/1/label"), &json!({ "name": "Town" }));
    assert_eq!(dup.status, 409);
    let missing = api.post(&format!("/sessions/{sid}/columns/9/label"), &json!({ "name": "X" }));
    assert_eq!(missing.status, 404);
}

#[test]
fn export_formats_and_refusals() {
    let (api, sid) = imported();
    assert_eq!(api.get(&format!("/sessions/{sid}/export")).status, 400);
    assert_eq!(api.get(&format!("/sessions/{sid}/export?format=xlsx")).status, 400);
    let csv = api.get(&format!("/sessions/{sid}/export?format=csv"));
    assert_eq!(csv.status, 200);
    assert!(csv.content_type.starts_with("text/csv"));
    assert_eq!(csv.text.lines().count(), 13);
    let geo = api.get(&format!("/sessions/{sid}/export?format=geojson"));
    assert_eq!(geo.status, 422);
    assert_eq!(geo.body["error"]["code"], "unprocessable");
    let json = api.get(&format!("/sessions/{sid}/export?format=json"));
    assert_eq!(json.status, 200);
    assert!(json.body.is_array() || json.body.is_object());
}

#[test]
fn uploaded_sources_reach_live_sessions() {
    let api = Api::start();
    let sid = api.new_session();
    let up = api.upload("shelters.html");
    assert_eq!(up.status, 201, "{}", up.text);
    assert_eq!(up.body["rows"], 12);
    assert_eq!(up.body["source"]["id"], "shelters");

    // the session predates the upload but can paste from it
    let out = api.post(&format!("/sessions/{sid}/paste"), &paste_body("shelters", &two_rows(), 0, 0));
    assert_eq!(out.status, 200, "{}", out.text);

    let dup = api.upload("shelters.html");
    assert_eq!(dup.status, 409);
    let nameless = api.post("/sources", &json!({ "name": "notes", "content": "a,b" }));
    assert_eq!(nameless.status, 400);

    let cat = api.get("/catalog");
    let ids: Vec<&Value> = cat.body["sources"].as_array().unwrap().iter().map(|s| &s["descriptor"]["id"]).collect();
    assert!(ids.contains(&&json!("shelters")) && ids.contains(&&json!("zipcodes")));
    assert!(!cat.body["graph"]["edges"].as_array().unwrap().is_empty());
}

#[test]
fn mode_can_be_switched_explicitly() {
    let (api, sid) = imported();
    let r = api.post(&format!("/sessions/{sid}/mode"), &json!({ "mode": "integration" }));
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.body["mode"], "integration");
    assert_eq!(api.get(&format!("/sessions/{sid}")).body["mode"], "integration");
    assert_eq!(api.post(&format!("/sessions/{sid}/mode"), &json!({ "mode": "sideways" })).status, 400);
}

#[test]
fn feedback_batches_apply_in_order() {
    let (api, sid) = imported();
    let s = api.get(&format!("/sessions/{sid}/suggestions"));
    let zip = through(&s.body["suggestions"], "zipcodes").unwrap()["id"].clone();
    let geo = through(&s.body["suggestions"], "geocoder").unwrap()["id"].clone();
    let r = api.post(
        &format!("/sessions/{sid}/feedback"),
        &json!({ "events": [
            { "suggestion": geo, "verdict": "reject" },
            { "suggestion": zip, "verdict": "accept" },
        ] }),
    );
    assert_eq!(r.status, 200, "{}", r.text);
    assert_eq!(r.body["grid"]["columns"].as_array().unwrap().len(), 4);
    assert!(r.body["suggestions"].as_array().unwrap().iter().all(|x| x["id"] != geo));
}

#[test]
fn session_log_replays_from_the_initial_catalog() {
    let (api, sid) = imported();
    accept_through(&api, &sid, "zipcodes");
    let log = api.get(&format!("/sessions/{sid}/log")).text;
    let initial = api.get(&format!("/sessions/{sid}/initial-catalog")).text;
    let catalog = pfg_core::catalog::Catalog::from_json(&initial).unwrap();
    let (_, services) = pfg_gateway::bootstrap(&common::config()).unwrap();
    let events = pfg_core::session::parse_ndjson(&log).unwrap();
    let session = pfg_core::session::Session::replay(catalog, common::config().session_config(), &services, &events)
        .unwrap();
    let csv = api.get(&format!("/sessions/{sid}/export?format=csv")).text;
    let again = String::from_utf8(session.export(pfg_core::session::ExportFormat::Csv).unwrap()).unwrap();
    assert_eq!(again, csv);
}
