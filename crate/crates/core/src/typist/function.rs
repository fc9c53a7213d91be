use crate::catalog::AttributeSpec;
use crate::engine::similarity::tuple_similarity;
use crate::services::ServiceClient;
use crate::Value;

use super::TypistError;

/// For each attribute of `to`, the index of the attribute of `from` with the
/// same semantic type. Each `from` attribute is used at most once.
fn align_by_type(from: &[AttributeSpec], to: &[AttributeSpec]) -> Option<Vec<usize>> {
    if from.len() != to.len() {
        return None;
    }
    let mut used = vec![false; from.len()];
    to.iter()
        .map(|t| {
            let i = from
                .iter()
                .enumerate()
                .position(|(i, f)| !used[i] && f.semantic_type == t.semantic_type)?;
            used[i] = true;
            Some(i)
        })
        .collect()
}

/// Share of probe inputs on which `candidate` reproduces the outputs of
/// `known`. Probe rows are given in `known`'s input order; outputs agree when
/// some pair of answers reaches `link_threshold` under record-link
/// similarity. A probe on which either side fails counts as disagreement.
pub fn match_source_function(
    candidate: &ServiceClient,
    known: &ServiceClient,
    probes: &[Vec<Value>],
    link_threshold: f64,
) -> Result<f64, TypistError> {
    let incompatible = |reason: &str| TypistError::IncompatibleSignatures {
        candidate: candidate.id.clone(),
        known: known.id.clone(),
        reason: reason.to_string(),
    };
    let cand_sig = &candidate.signature;
    let known_sig = &known.signature;
    // candidate input j is fed from known input input_map[j]
    let input_map =
        align_by_type(&known_sig.inputs, &cand_sig.inputs).ok_or_else(|| incompatible("input types differ"))?;
    // known output output_map[j] corresponds to candidate output j
    let output_map =
        align_by_type(&known_sig.outputs, &cand_sig.outputs).ok_or_else(|| incompatible("output types differ"))?;
    if probes.is_empty() {
        return Err(TypistError::NoProbes);
    }

    let mut agreements = 0usize;
    let mut last_error = None;
    let mut answered = 0usize;
    for probe in probes {
        let cand_inputs: Vec<Value> = input_map.iter().map(|&i| probe[i].clone()).collect();
        let (known_out, cand_out) = match (known.call(probe), candidate.call(&cand_inputs)) {
            (Ok(k), Ok(c)) => (k, c),
            (Err(e), _) | (_, Err(e)) => {
                last_error = Some(e);
                continue;
            }
        };
        answered += 1;
        let agree = if known_out.is_empty() || cand_out.is_empty() {
            known_out.is_empty() && cand_out.is_empty()
        } else {
            cand_out.iter().any(|c| {
                known_out.iter().any(|k| {
                    let k_aligned: Vec<Value> = output_map.iter().map(|&i| k[i].clone()).collect();
                    tuple_similarity(&k_aligned, c) >= link_threshold
                })
            })
        };
        if agree {
            agreements += 1;
        }
    }
    if answered == 0 {
        return Err(TypistError::AllProbesFailed(last_error.expect("probes is non-empty")));
    }
    Ok(agreements as f64 / probes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{FanOut, ServiceSignature};
    use crate::services::{MockTransport, ServiceCache, Transport, TransportError};
    use std::sync::Arc;

    fn v(s: &str) -> Value {
        Some(s.to_string())
    }

    fn sig(outputs: &[(&str, &str)]) -> ServiceSignature {
        ServiceSignature {
            inputs: vec![
                AttributeSpec::new("street", Some("PR-Street"), 0),
                AttributeSpec::new("city", Some("PR-City"), 1),
            ],
            outputs: outputs
                .iter()
                .enumerate()
                .map(|(i, (n, t))| AttributeSpec::new(*n, Some(t), i))
                .collect(),
            fan_out: FanOut::Many,
        }
    }

    fn rows() -> Vec<Vec<Value>> {
        vec![
            vec![v("1 A St"), v("Margate"), v("33063")],
            vec![v("2 B St"), v("Davie"), v("33314")],
            vec![v("3 C St"), v("Tamarac"), v("33321")],
            vec![v("4 D St"), v("Weston"), v("33326")],
        ]
    }

    fn client(id: &str, s: ServiceSignature, data: Vec<Vec<Value>>) -> ServiceClient {
        ServiceClient::new(id.into(), s, Arc::new(MockTransport::new(2, data)), Arc::new(ServiceCache::default()))
    }

    fn probes() -> Vec<Vec<Value>> {
        rows().into_iter().map(|r| r[..2].to_vec()).collect()
    }

    #[test]
    fn identical_mock_agrees_everywhere() {
        let a = client("zipcodes", sig(&[("Zip", "Zip5")]), rows());
        let b = client("zipcodes2", sig(&[("zip", "Zip5")]), rows());
        assert_eq!(match_source_function(&b, &a, &probes(), 0.8).unwrap(), 1.0);
    }

    #[test]
    fn one_disagreeing_probe() {
        let a = client("zipcodes", sig(&[("Zip", "Zip5")]), rows());
        let mut other = rows();
        other[2][2] = v("90210");
        let b = client("alt", sig(&[("Zip", "Zip5")]), other);
        assert_eq!(match_source_function(&b, &a, &probes(), 0.8).unwrap(), 0.75);
    }

    #[test]
    fn geocoder_is_not_a_zip_resolver() {
        let a = client("zipcodes", sig(&[("Zip", "Zip5")]), rows());
        let g = client("geocoder", sig(&[("lat", "Latitude"), ("lon", "Longitude")]), vec![]);
        assert!(matches!(
            match_source_function(&g, &a, &probes(), 0.8),
            Err(TypistError::IncompatibleSignatures { .. })
        ));
    }

    struct Down;
    impl Transport for Down {
        fn invoke(&self, _: &[Value]) -> Result<Vec<Vec<Value>>, TransportError> {
            Err(TransportError("down".into()))
        }
    }

    #[test]
    fn all_probes_failing_is_an_error() {
        let a = client("zipcodes", sig(&[("Zip", "Zip5")]), rows());
        let d = ServiceClient::new("down".into(), sig(&[("Zip", "Zip5")]), Arc::new(Down), Default::default())
            .with_retry(crate::services::RetryPolicy {
                retries: 0,
                base_delay: std::time::Duration::ZERO,
            });
        assert!(matches!(
            match_source_function(&d, &a, &probes(), 0.8),
            Err(TypistError::AllProbesFailed(_))
        ));
    }
}
