//! Cached, retrying clients for services with input binding restrictions.
//!
//! Transport is pluggable: an in-process lookup table ([`MockTransport`])
//! ships with the crate, HTTP endpoints live in the gateway. Every response
//! is validated against the service signature before it is cached, and the
//! cache is keyed by `(service id, input cells)` so that replaying provenance
//! never needs the transport again.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::catalog::{FanOut, ServiceSignature};
use crate::typist::TypeModel;
use crate::{SourceId, Value};

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown service `{0}`")]
    UnknownService(SourceId),
    #[error("service `{service}` expects {expected} inputs, got {got}")]
    InputArity {
        service: SourceId,
        expected: usize,
        got: usize,
    },
    #[error("service `{service}` failed after {attempts} attempts: {message}")]
    Upstream {
        service: SourceId,
        attempts: u32,
        message: String,
    },
    #[error("service `{service}` returned an invalid response: {reason}")]
    InvalidResponse { service: SourceId, reason: String },
}

pub trait Transport: Send + Sync {
    /// Performs one call. An empty list means the service knows no answer.
    fn invoke(&self, inputs: &[Value]) -> Result<Vec<Vec<Value>>, TransportError>;
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// In-process lookup table. Inputs match case-insensitively after collapsing
/// whitespace; every matching row is a candidate answer.
#[derive(Debug, Default)]
pub struct MockTransport {
    rows: Vec<(Vec<String>, Vec<Value>)>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(input_arity: usize, rows: Vec<Vec<Value>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| {
                let (i, o) = r.split_at(input_arity.min(r.len()));
                let key = i.iter().map(|v| normalize(v.as_deref().unwrap_or(""))).collect();
                (key, o.to_vec())
            })
            .collect();
        MockTransport {
            rows,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn invoke(&self, inputs: &[Value]) -> Result<Vec<Vec<Value>>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key: Vec<String> = inputs
            .iter()
            .map(|v| normalize(v.as_deref().unwrap_or("")))
            .collect();
        Ok(self
            .rows
            .iter()
            .filter(|(k, _)| *k == key)
            .map(|(_, o)| o.clone())
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            base_delay: Duration::from_millis(50),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallKey {
    pub service: SourceId,
    pub inputs: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub service: SourceId,
    pub inputs: Vec<Value>,
    pub outputs: Vec<Vec<Value>>,
}

/// Shared response cache. Concurrent reads, serialized inserts.
#[derive(Debug, Default)]
pub struct ServiceCache {
    entries: RwLock<BTreeMap<CallKey, Vec<Vec<Value>>>>,
}

impl ServiceCache {
    pub fn get(&self, key: &CallKey) -> Option<Vec<Vec<Value>>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CallKey, outputs: Vec<Vec<Value>>) {
        self.entries.write().expect("cache lock").insert(key, outputs);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evict(&self, key: &CallKey) -> bool {
        self.entries.write().expect("cache lock").remove(key).is_some()
    }

    pub fn snapshot(&self) -> Vec<CacheEntry> {
        self.entries
            .read()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| CacheEntry {
                service: k.service.clone(),
                inputs: k.inputs.clone(),
                outputs: v.clone(),
            })
            .collect()
    }

    pub fn restore(&self, entries: Vec<CacheEntry>) {
        let mut map = self.entries.write().expect("cache lock");
        for e in entries {
            map.insert(
                CallKey {
                    service: e.service,
                    inputs: e.inputs,
                },
                e.outputs,
            );
        }
    }
}

pub struct ServiceClient {
    pub id: SourceId,
    pub signature: ServiceSignature,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    cache: Arc<ServiceCache>,
    /// Optional type model per output attribute used to validate responses.
    validators: Vec<Option<TypeModel>>,
    transports: AtomicUsize,
    miss_lock: Mutex<()>,
}

impl std::fmt::Debug for ServiceClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceClient")
            .field("id", &self.id)
            .field("transports", &self.transport_count())
            .finish()
    }
}

impl ServiceClient {
    pub fn new(
        id: SourceId,
        signature: ServiceSignature,
        transport: Arc<dyn Transport>,
        cache: Arc<ServiceCache>,
    ) -> Self {
        let validators = vec![None; signature.outputs.len()];
        ServiceClient {
            id,
            signature,
            transport,
            retry: RetryPolicy::default(),
            cache,
            validators,
            transports: AtomicUsize::new(0),
            miss_lock: Mutex::new(()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Validates output values against type models, matched by position.
    pub fn with_validators(mut self, validators: Vec<Option<TypeModel>>) -> Self {
        assert_eq!(validators.len(), self.signature.outputs.len());
        self.validators = validators;
        self
    }

    /// Number of transport invocations so far, retries included.
    pub fn transport_count(&self) -> usize {
        self.transports.load(Ordering::SeqCst)
    }

    fn key(&self, inputs: &[Value]) -> CallKey {
        CallKey {
            service: self.id.clone(),
            inputs: inputs.to_vec(),
        }
    }

    pub fn cached(&self, inputs: &[Value]) -> Option<Vec<Vec<Value>>> {
        self.cache.get(&self.key(inputs))
    }

    fn validate(&self, outputs: &[Vec<Value>]) -> Result<(), ServiceError> {
        let invalid = |reason: String| ServiceError::InvalidResponse {
            service: self.id.clone(),
            reason,
        };
        if self.signature.fan_out == FanOut::AtMostOne && outputs.len() > 1 {
            return Err(invalid(format!("{} candidates for an at-most-one service", outputs.len())));
        }
        for o in outputs {
            if o.len() != self.signature.outputs.len() {
                return Err(invalid(format!(
                    "tuple arity {} does not match {} outputs",
                    o.len(),
                    self.signature.outputs.len()
                )));
            }
            for ((v, model), attr) in o.iter().zip(&self.validators).zip(&self.signature.outputs) {
                if let (Some(v), Some(m)) = (v, model) {
                    if !m.accepts(v) {
                        return Err(invalid(format!("`{v}` is not a valid {} for `{}`", m.type_id, attr.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Cached call. A miss goes to the transport with up to `retries`
    /// retries and exponential backoff; empty answers are cached too.
    pub fn call(&self, inputs: &[Value]) -> Result<Vec<Vec<Value>>, ServiceError> {
        if inputs.len() != self.signature.inputs.len() {
            return Err(ServiceError::InputArity {
                service: self.id.clone(),
                expected: self.signature.inputs.len(),
                got: inputs.len(),
            });
        }
        let key = self.key(inputs);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let _guard = self.miss_lock.lock().expect("miss lock");
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let mut attempt = 0;
        let outputs = loop {
            attempt += 1;
            self.transports.fetch_add(1, Ordering::SeqCst);
            match self.transport.invoke(inputs) {
                Ok(o) => break o,
                Err(e) if attempt > self.retry.retries => {
                    return Err(ServiceError::Upstream {
                        service: self.id.clone(),
                        attempts: attempt,
                        message: e.0,
                    })
                }
                Err(e) => {
                    log::debug!("service {} attempt {attempt} failed: {}", self.id, e.0);
                    thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                }
            }
        };
        self.validate(&outputs)?;
        self.cache.insert(key, outputs.clone());
        Ok(outputs)
    }
}

/// All service clients of one deployment, sharing one cache.
#[derive(Debug, Default)]
pub struct ServiceRegistry {
    clients: BTreeMap<SourceId, Arc<ServiceClient>>,
    cache: Arc<ServiceCache>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cache(&self) -> &Arc<ServiceCache> {
        &self.cache
    }

    /// A client on this registry's shared cache; register it with
    /// [`ServiceRegistry::insert`] once configured.
    pub fn client(&self, id: SourceId, signature: ServiceSignature, transport: Arc<dyn Transport>) -> ServiceClient {
        ServiceClient::new(id, signature, transport, self.cache.clone())
    }

    /// Builds and registers a client with default settings.
    pub fn add(&mut self, id: SourceId, signature: ServiceSignature, transport: Arc<dyn Transport>) -> Arc<ServiceClient> {
        let client = Arc::new(self.client(id.clone(), signature, transport));
        self.clients.insert(id, client.clone());
        client
    }

    pub fn insert(&mut self, client: ServiceClient) {
        self.clients.insert(client.id.clone(), Arc::new(client));
    }

    pub fn get(&self, id: &SourceId) -> Result<&Arc<ServiceClient>, ServiceError> {
        self.clients
            .get(id)
            .ok_or_else(|| ServiceError::UnknownService(id.clone()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &SourceId> {
        self.clients.keys()
    }

    /// Cached outputs for a call, without touching any transport.
    pub fn cached(&self, service: &SourceId, inputs: &[Value]) -> Option<Vec<Vec<Value>>> {
        self.cache.get(&CallKey {
            service: service.clone(),
            inputs: inputs.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::AttributeSpec;
    use proptest::prelude::*;

    fn v(s: &str) -> Value {
        Some(s.to_string())
    }

    fn zip_signature(fan_out: FanOut) -> ServiceSignature {
        ServiceSignature {
            inputs: vec![AttributeSpec::new("street", None, 0), AttributeSpec::new("city", None, 1)],
            outputs: vec![AttributeSpec::new("Zip", None, 0)],
            fan_out,
        }
    }

    fn zip_mock() -> Arc<MockTransport> {
        Arc::new(MockTransport::new(
            2,
            vec![
                vec![v("3500 Market St"), v("Philadelphia"), v("19104")],
                vec![v("100 Main St"), v("Springfield"), v("62701")],
                vec![v("100 Main St"), v("Springfield"), v("62704")],
            ],
        ))
    }

    struct Flaky {
        failures: AtomicUsize,
    }

    impl Transport for Flaky {
        fn invoke(&self, _inputs: &[Value]) -> Result<Vec<Vec<Value>>, TransportError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(TransportError("connection reset".into()));
            }
            Ok(vec![vec![v("1")]])
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            retries: 2,
            base_delay: Duration::from_millis(1),
        }
    }

    #[test]
    fn lookup_then_cache_hit() {
        let mock = zip_mock();
        let c = ServiceClient::new("zipcodes".into(), zip_signature(FanOut::Many), mock.clone(), Default::default());
        let out = c.call(&[v("3500 Market St"), v("Philadelphia")]).unwrap();
        assert_eq!(out, vec![vec![v("19104")]]);
        let again = c.call(&[v("3500 Market St"), v("Philadelphia")]).unwrap();
        assert_eq!(again, out);
        assert_eq!(mock.calls(), 1);
        assert_eq!(c.transport_count(), 1);
    }

    #[test]
    fn ambiguous_input_yields_candidates() {
        let c = ServiceClient::new("zipcodes".into(), zip_signature(FanOut::Many), zip_mock(), Default::default());
        let out = c.call(&[v("100 main st"), v("SPRINGFIELD")]).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn at_most_one_rejects_ambiguity() {
        let c = ServiceClient::new("zipcodes".into(), zip_signature(FanOut::AtMostOne), zip_mock(), Default::default());
        assert!(matches!(
            c.call(&[v("100 Main St"), v("Springfield")]),
            Err(ServiceError::InvalidResponse { .. })
        ));
    }

    #[test]
    fn empty_answer_is_cached() {
        let mock = zip_mock();
        let c = ServiceClient::new("zipcodes".into(), zip_signature(FanOut::Many), mock.clone(), Default::default());
        assert!(c.call(&[v("nowhere"), v("x")]).unwrap().is_empty());
        assert!(c.call(&[v("nowhere"), v("x")]).unwrap().is_empty());
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let flaky = Arc::new(Flaky { failures: AtomicUsize::new(2) });
        let sig = ServiceSignature {
            inputs: vec![AttributeSpec::new("a", None, 0)],
            outputs: vec![AttributeSpec::new("b", None, 0)],
            fan_out: FanOut::AtMostOne,
        };
        let c = ServiceClient::new("f".into(), sig, flaky, Default::default()).with_retry(fast());
        assert_eq!(c.call(&[v("x")]).unwrap(), vec![vec![v("1")]]);
        assert_eq!(c.transport_count(), 3);
    }

    #[test]
    fn gives_up_after_two_retries() {
        let flaky = Arc::new(Flaky { failures: AtomicUsize::new(10) });
        let sig = ServiceSignature {
            inputs: vec![AttributeSpec::new("a", None, 0)],
            outputs: vec![AttributeSpec::new("b", None, 0)],
            fan_out: FanOut::AtMostOne,
        };
        let c = ServiceClient::new("f".into(), sig, flaky, Default::default()).with_retry(fast());
        match c.call(&[v("x")]) {
            Err(ServiceError::Upstream { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(c.cached(&[v("x")]).is_none());
    }

    #[test]
    fn invalid_arity_and_types_are_not_cached() {
        let bad = Arc::new(MockTransport::new(1, vec![vec![v("x"), v("1"), v("2")]]));
        let sig = ServiceSignature {
            inputs: vec![AttributeSpec::new("a", None, 0)],
            outputs: vec![AttributeSpec::new("b", None, 0)],
            fan_out: FanOut::Many,
        };
        let c = ServiceClient::new("bad".into(), sig.clone(), bad, Default::default());
        assert!(matches!(c.call(&[v("x")]), Err(ServiceError::InvalidResponse { .. })));
        assert!(c.cached(&[v("x")]).is_none());

        let typed = Arc::new(MockTransport::new(1, vec![vec![v("x"), v("abc")]]));
        let zip = crate::typist::learn_type("Zip5", &["19104", "33063"]).unwrap();
        let c = ServiceClient::new("typed".into(), sig, typed, Default::default()).with_validators(vec![Some(zip)]);
        assert!(matches!(c.call(&[v("x")]), Err(ServiceError::InvalidResponse { .. })));
        assert!(matches!(c.call(&[v("x"), v("y")]), Err(ServiceError::InputArity { .. })));
    }

    proptest! {
        #[test]
        fn transports_equal_distinct_inputs(calls in proptest::collection::vec((0u8..4, 0u8..3), 0..30)) {
            let mock = zip_mock();
            let c = ServiceClient::new("zipcodes".into(), zip_signature(FanOut::Many), mock.clone(), Default::default());
            let mut distinct = std::collections::BTreeSet::new();
            for (a, b) in calls {
                let inputs = [v(&format!("{a} Main St")), v(&format!("City{b}"))];
                distinct.insert(inputs.clone());
                c.call(&inputs).unwrap();
            }
            prop_assert_eq!(c.transport_count(), distinct.len());
            prop_assert_eq!(mock.calls(), distinct.len());
        }
    }
}
