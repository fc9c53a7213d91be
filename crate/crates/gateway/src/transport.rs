//! JSON-over-HTTP service transport.
//!
//! A call posts `{"service": id, "inputs": [..]}` to the endpoint and expects
//! `{"outputs": [[..], ..]}` back, one inner array per candidate answer.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use pfg_core::services::{Transport, TransportError};
use pfg_core::Value;

#[derive(Serialize)]
struct CallRequest<'a> {
    service: &'a str,
    inputs: &'a [Value],
}

#[derive(Deserialize)]
struct CallResponse {
    outputs: Vec<Vec<Value>>,
}

pub struct HttpTransport {
    service: String,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    /// Must be built outside an async context; the blocking client owns a
    /// runtime of its own.
    pub fn new(service: impl Into<String>, url: impl Into<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpTransport {
            service: service.into(),
            url: url.into(),
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn invoke(&self, inputs: &[Value]) -> Result<Vec<Vec<Value>>, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&CallRequest {
                service: &self.service,
                inputs,
            })
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError(format!("{} answered {status}", self.url)));
        }
        let body: CallResponse = resp.json().map_err(|e| TransportError(format!("bad response body: {e}")))?;
        Ok(body.outputs)
    }
}
