mod common;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use proptest::prelude::*;
use serde_json::{json, Value as Json_};

use pfg_core::services::{ServiceRegistry, Transport};
use pfg_core::{SourceId, Value};
use pfg_gateway::transport::HttpTransport;
use pfg_gateway::{bootstrap, Config};

use common::{of_kind, paste_body, shelter_rows, through, Api};

fn fixture_services() -> ServiceRegistry {
    bootstrap(&common::config()).unwrap().1
}

fn v(s: &str) -> Value {
    Some(s.to_string())
}

#[test]
fn zip_lookup_answers_from_its_table() {
    let reg = fixture_services();
    let zip = reg.get(&SourceId::from("zipcodes")).unwrap();
    assert_eq!(zip.call(&[v("3500 Market St"), v("Philadelphia")]).unwrap(), vec![vec![v("19104")]]);
    let mut both = zip.call(&[v("100 Main St"), v("Springfield")]).unwrap();
    both.sort();
    assert_eq!(both, vec![vec![v("62701")], vec![v("62704")]]);
    assert!(zip.call(&[v("1 Nowhere Ln"), v("Atlantis")]).unwrap().is_empty());
    assert!(zip.call(&[v("only one input")]).is_err());
}

const STREETS: [(&str, &str); 4] = [
    ("3500 Market St", "Philadelphia"),
    ("100 Main St", "Springfield"),
    ("500 Banks Rd", "Margate"),
    ("1 Nowhere Ln", "Atlantis"),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn each_distinct_input_reaches_the_transport_once(picks in prop::collection::vec(0usize..4, 1..30)) {
        let reg = fixture_services();
        let zip = reg.get(&SourceId::from("zipcodes")).unwrap();
        for &i in &picks {
            let (street, city) = STREETS[i];
            zip.call(&[v(street), v(city)]).unwrap();
        }
        let distinct: std::collections::BTreeSet<usize> = picks.iter().copied().collect();
        prop_assert_eq!(zip.transport_count(), distinct.len());
    }
}

/// A JSON service answering from the zip fixture table, or failing with 500
/// when `fail` is set. Returns its URL and a hit counter.
fn mock_service(fail: bool) -> (String, Arc<AtomicUsize>) {
    let table: Vec<(String, String, String)> = common::fixture("zipcodes.csv")
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect();
    let hits = Arc::new(AtomicUsize::new(0));
    let state = (Arc::new(table), hits.clone(), fail);
    async fn handle(
        State((table, hits, fail)): State<(Arc<Vec<(String, String, String)>>, Arc<AtomicUsize>, bool)>,
        Json(req): Json<Json_>,
    ) -> (StatusCode, Json<Json_>) {
        hits.fetch_add(1, Ordering::SeqCst);
        if fail {
            return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": "down" })));
        }
        let inputs = &req["inputs"];
        let outputs: Vec<Json_> = table
            .iter()
            .filter(|(s, c, _)| inputs[0] == s.as_str() && inputs[1] == c.as_str())
            .map(|(_, _, z)| json!([z]))
            .collect();
        (StatusCode::OK, Json(json!({ "outputs": outputs })))
    }
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new().route("/call", post(handle)).with_state(state);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}/call", rx.recv().unwrap()), hits)
}

/// Fixture directory whose zip service lives at `url`.
fn remote_fixtures(dir: &Path, url: &str) {
    std::fs::copy(common::fixtures().join("types.json"), dir.join("types.json")).unwrap();
    let services = json!({ "services": [{
        "id": "zipcodes",
        "inputs": [{ "name": "Street", "type": "Street" }, { "name": "City", "type": "City" }],
        "outputs": [{ "name": "Zip", "type": "Zip5" }],
        "fan_out": "many",
        "url": url,
    }] });
    std::fs::write(dir.join("services.json"), services.to_string()).unwrap();
}

#[test]
fn http_transport_round_trips() {
    let (url, hits) = mock_service(false);
    let t = HttpTransport::new("zipcodes", url, Duration::from_secs(5)).unwrap();
    assert_eq!(t.invoke(&[v("3500 Market St"), v("Philadelphia")]).unwrap(), vec![vec![v("19104")]]);
    assert_eq!(t.invoke(&[v("100 Main St"), v("Springfield")]).unwrap().len(), 2);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn http_transport_reports_failures() {
    let (url, _) = mock_service(true);
    let t = HttpTransport::new("zipcodes", url, Duration::from_secs(5)).unwrap();
    assert!(t.invoke(&[v("a"), v("b")]).unwrap_err().0.contains("500"));
    let closed = HttpTransport::new("zipcodes", "http://127.0.0.1:9/call", Duration::from_secs(1)).unwrap();
    assert!(closed.invoke(&[v("a"), v("b")]).is_err());
}

#[test]
fn remote_service_fills_the_grid_over_http() {
    let (url, hits) = mock_service(false);
    let dir = tempfile::tempdir().unwrap();
    remote_fixtures(dir.path(), &url);
    let api = Api::with_config(Config {
        fixtures: dir.path().to_path_buf(),
        ..Config::default()
    });
    assert_eq!(api.upload("shelters.html").status, 201);
    let sid = api.new_session();
    let rows = shelter_rows(&["Margate Middle School", "Western High School"]);
    let out = api.post(&format!("/sessions/{sid}/paste"), &paste_body("shelters", &rows, 0, 0));
    let rc = of_kind(&out.body["suggestions"], "row-completion")[0]["id"].clone();
    api.post(&format!("/sessions/{sid}/feedback"), &json!({ "suggestion": rc, "verdict": "accept" }));
    let s = api.get(&format!("/sessions/{sid}/suggestions"));
    let zip = through(&s.body["suggestions"], "zipcodes").expect("zip offered")["id"].clone();
    let r = api.post(&format!("/sessions/{sid}/feedback"), &json!({ "suggestion": zip, "verdict": "accept" }));
    assert_eq!(r.status, 200, "{}", r.text);
    let rows = r.body["grid"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|row| row["cells"][3].is_string()));
    // twelve distinct addresses, each asked for once
    assert_eq!(hits.load(Ordering::SeqCst), 12);
}

#[test]
fn failing_remote_service_is_reported_not_offered() {
    let (url, _) = mock_service(true);
    let dir = tempfile::tempdir().unwrap();
    remote_fixtures(dir.path(), &url);
    let api = Api::with_config(Config {
        fixtures: dir.path().to_path_buf(),
        ..Config::default()
    });
    api.upload("shelters.html");
    let sid = api.new_session();
    let rows = shelter_rows(&["Margate Middle School", "Western High School"]);
    let out = api.post(&format!("/sessions/{sid}/paste"), &paste_body("shelters", &rows, 0, 0));
    assert_eq!(out.status, 200, "{}", out.text);
    let rc = of_kind(&out.body["suggestions"], "row-completion")[0]["id"].clone();
    let fb = api.post(&format!("/sessions/{sid}/feedback"), &json!({ "suggestion": rc, "verdict": "accept" }));
    assert_eq!(fb.status, 200, "{}", fb.text);
    // the zip column cannot be previewed, so it is not offered and the
    // reason is reported instead
    assert!(through(&fb.body["suggestions"], "zipcodes").is_none());
    let diagnostics = fb.body["diagnostics"].to_string();
    assert!(diagnostics.contains("zipcodes") && diagnostics.contains("500"), "{diagnostics}");
    let state = api.get(&format!("/sessions/{sid}"));
    assert_eq!(state.body["diagnostics"], fb.body["diagnostics"]);
}
