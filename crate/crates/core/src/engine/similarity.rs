use crate::Value;

fn fold(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// `1 − d / max(|a|, |b|)` over case-folded, whitespace-collapsed strings,
/// with `d` the Levenshtein distance in characters.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&fold(a), &fold(b))
}

/// Mean per-field similarity of two tuples of equal width. Two nulls agree,
/// a null against a value does not.
pub fn tuple_similarity(a: &[Value], b: &[Value]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    if a.is_empty() {
        return 1.0;
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (None, None) => 1.0,
            (Some(x), Some(y)) => normalized_similarity(x, y),
            _ => 0.0,
        })
        .sum();
    total / a.len() as f64
}

/// Similarity used to link records: like [`tuple_similarity`] except that
/// a null never links, not even to another null.
pub fn link_similarity(a: &[Value], b: &[Value]) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return 0.0;
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => normalized_similarity(x, y),
            _ => 0.0,
        })
        .sum();
    total / a.len() as f64
}
